"""Priors, the unnormalized log posterior and the MAP initializer for MCMC."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .filters import (EPS, GaussianBelief, det_loglik, kf_marginal_loglik, noiseless_loglik,
                      ukf_marginal_loglik)
from .models import ObservationSet, StateSpaceModel

LIKELIHOODS = ("KF", "UKF", "Deterministic", "Noiseless")
_HALF_LOG_2_OVER_PI = 0.5 * np.log(2.0 / np.pi)


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Prior:
    """Univariate prior.  ``kind`` is one of ImproperUniform, HalfNormal, Laplace, Normal.

    HalfNormal uses ``scale``; Laplace uses ``rate`` (density
    ``rate/2 * exp(-rate |x - loc|)``); Normal uses ``loc`` and ``scale``.
    All densities are normalized.
    """

    kind: str
    scale: float = 1.0
    rate: float = 1.0
    loc: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ImproperUniform", "HalfNormal", "Laplace", "Normal"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if not (self.scale > 0 and self.rate > 0):
            raise ValueError("prior scale and rate must be positive")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "ImproperUniform":
            return np.zeros_like(x)
        if self.kind == "HalfNormal":
            z = x / self.scale
            out = _HALF_LOG_2_OVER_PI - np.log(self.scale) - 0.5 * z * z
            return np.where(x >= 0, out, -np.inf)
        if self.kind == "Laplace":
            return np.log(0.5 * self.rate) - self.rate * np.abs(x - self.loc)
        z = (x - self.loc) / self.scale
        return -0.5 * z * z - np.log(self.scale) - 0.5 * np.log(2.0 * np.pi)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind in ("HalfNormal", "Normal"):
            out["scale"] = self.scale
        if self.kind == "Laplace":
            out["rate"] = self.rate
        if self.kind in ("Laplace", "Normal") and self.loc != 0.0:
            out["loc"] = self.loc
        return out


def ImproperUniform():
    return Prior("ImproperUniform")


def HalfNormal(scale=1.0):
    return Prior("HalfNormal", scale=scale)


def Laplace(rate=1.0, loc=0.0):
    return Prior("Laplace", rate=rate, loc=loc)


def Normal(mean=0.0, std=1.0):
    return Prior("Normal", scale=std, loc=mean)


class PriorSpec:
    """One :class:`Prior` per parameter index."""

    def __init__(self, priors: Sequence[Prior]):
        self.priors = tuple(priors)
        if not all(isinstance(p, Prior) for p in self.priors):
            raise TypeError("PriorSpec entries must be Prior instances")
        groups = {}
        for i, p in enumerate(self.priors):
            groups.setdefault(p, []).append(i)
        self._groups = [(p, np.array(idx)) for p, idx in groups.items()]

    def __len__(self):
        return len(self.priors)

    @classmethod
    def for_model(cls, model: StateSpaceModel, dyn=None, obs=None, proc=None, meas=None):
        """Block-wise construction; defaults are uniform dynamics/observation
        parameters and unit half-normal variances."""
        sizes = model.partition.sizes
        blocks = (dyn or ImproperUniform(), obs or ImproperUniform(),
                  proc or HalfNormal(1.0), meas or HalfNormal(1.0))
        priors = []
        for n, b in zip(sizes, blocks):
            priors.extend(b if isinstance(b, (list, tuple)) else [b] * n)
        if len(priors) != model.p:
            raise ValueError("per-parameter prior lists must match the block sizes")
        return cls(priors)

    def to_list(self):
        return [p.to_dict() for p in self.priors]

    @classmethod
    def from_list(cls, items):
        return cls([Prior(**item) for item in items])


def log_prior(prior: PriorSpec, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(prior),):
        raise ValueError(f"expected {len(prior)} parameters, got shape {theta.shape}")
    total = 0.0
    for p, idx in prior._groups:
        total += float(np.sum(p.logpdf(theta[idx])))
    return total


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------


@dataclass
class PosteriorHandle:
    """Unnormalized log posterior ``log p(theta) + log L(theta; data)``.

    Parameters
    ----------
    model, data, prior
    kind : {"KF", "UKF", "Deterministic", "Noiseless"}
    alpha, kappa, beta : float
        Unscented transform settings.
    eps : float
        Covariance nugget.
    init : GaussianBelief, optional
        Initial filter belief (see :func:`bayesid.filters.kf_marginal_loglik`).
    t0 : float, optional
        Time of ``init`` or ``x0``.
    x0 : array_like, optional
        Initial state for the deterministic likelihood.
    strict : bool
        Strict covariance update in the unscented filter.

    Calling the handle returns the log posterior.  ``n_likelihood_calls``
    counts likelihood evaluations (prior-infeasible points are not counted).
    """

    model: StateSpaceModel
    data: ObservationSet
    prior: PriorSpec
    kind: str = "KF"
    alpha: float = 1e-3
    kappa: float = 0.0
    beta: float = 1.0
    eps: float = EPS
    init: Optional[GaussianBelief] = None
    t0: Optional[float] = None
    x0: Optional[np.ndarray] = None
    strict: bool = False
    n_likelihood_calls: int = field(default=0, init=False, compare=False)

    def __post_init__(self):
        if self.kind not in LIKELIHOODS:
            raise ValueError(f"unknown likelihood kind {self.kind!r}; choose from {LIKELIHOODS}")
        if self.kind == "KF" and not self.model.linear:
            raise ValueError("KF likelihood requires a model linear in the state")
        if self.kind == "Noiseless" and not self.model.invertible_obs:
            raise ValueError("Noiseless likelihood requires an invertible observation operator")
        if self.kind == "Deterministic" and self.x0 is None:
            raise ValueError("Deterministic likelihood requires x0")
        if len(self.prior) != self.model.p:
            raise ValueError(f"prior has {len(self.prior)} entries, model has {self.model.p}")

    def log_likelihood(self, theta) -> float:
        self.n_likelihood_calls += 1
        theta = np.asarray(theta, dtype=float)
        if self.kind == "KF":
            return kf_marginal_loglik(self.model, theta, self.data, self.init, self.t0,
                                      self.eps).log_lik
        if self.kind == "UKF":
            return ukf_marginal_loglik(self.model, theta, self.data, self.init, self.alpha,
                                       self.kappa, self.beta, self.t0, self.eps,
                                       self.strict).log_lik
        if self.kind == "Deterministic":
            return det_loglik(self.model, theta, self.data, self.x0, self.t0)
        return noiseless_loglik(self.model, theta, self.data)

    def log_posterior(self, theta) -> float:
        lp = log_prior(self.prior, theta)
        if lp == -np.inf:
            return -np.inf
        ll = self.log_likelihood(theta)
        val = lp + ll
        return float(val) if np.isfinite(val) else -np.inf

    __call__ = log_posterior

    def settings(self):
        return {"likelihood": self.kind, "alpha": self.alpha, "kappa": self.kappa,
                "beta": self.beta, "eps": self.eps, "strict": self.strict,
                "prior": self.prior.to_list()}


# ---------------------------------------------------------------------------
# MAP and curvature
# ---------------------------------------------------------------------------


@dataclass
class MapResult:
    theta: np.ndarray
    neg_hessian_inv: np.ndarray
    log_post: float
    n_evals: int
    method: str
    hessian_fallback: bool = False
    message: str = ""

    def to_dict(self):
        return {"theta": self.theta.tolist(), "log_post": self.log_post,
                "neg_hessian_inv": self.neg_hessian_inv.tolist(), "n_evals": self.n_evals,
                "method": self.method, "hessian_fallback": self.hessian_fallback,
                "message": self.message}


def fd_hessian(f: Callable, x, rel_step=1e-4):
    """Central-difference Hessian with per-coordinate step ``rel_step * |x_i|``."""
    x = np.asarray(x, dtype=float)
    p = x.size
    h = rel_step * np.abs(x)
    h[h == 0] = rel_step
    f0 = f(x)
    H = np.empty((p, p))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(p)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4.0 * h[i] * h[j])
    return H


def find_map(log_post: Callable, theta_init, method="nelder-mead", max_evals=2000,
             rel_step=1e-4, eps=EPS, xatol=1e-10, fatol=1e-12) -> MapResult:
    """Maximize ``log_post`` and return the inverse negative Hessian at the optimum.

    Parameters
    ----------
    log_post : callable
        Log posterior (for instance a :class:`PosteriorHandle`).
    theta_init : array_like
        Feasible starting point.
    method : {"nelder-mead", "bfgs"}
        Derivative-free simplex search, or quasi-Newton with central
        finite-difference gradients.
    max_evals : int
        Cap on objective evaluations spent by the optimizer.
    rel_step : float
        Relative finite-difference step for the Hessian.

    Returns
    -------
    MapResult
        The best point seen (never worse than ``theta_init``).  If the
        negative Hessian cannot be inverted to a positive definite matrix the
        proposal falls back to a diagonal built from the positive curvature
        entries (``1e-2`` where curvature is unusable), and
        ``hessian_fallback`` is set.
    """
    x0 = np.atleast_1d(np.asarray(theta_init, dtype=float)).copy()
    best = {"x": x0.copy(), "f": float(log_post(x0)), "n": 1}

    def objective(x):
        val = float(log_post(x))
        best["n"] += 1
        if val > best["f"]:
            best["x"], best["f"] = np.array(x, dtype=float), val
        return -val if np.isfinite(val) else 1e300

    method_l = method.lower()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if method_l == "nelder-mead":
            res = optimize.minimize(objective, x0, method="Nelder-Mead",
                                    options={"maxfev": max_evals, "xatol": xatol,
                                             "fatol": fatol, "adaptive": x0.size > 4})
        elif method_l == "bfgs":
            res = optimize.minimize(objective, x0, method="BFGS", jac="3-point",
                                    options={"maxiter": max_evals, "gtol": 1e-8})
        else:
            raise ValueError(f"unknown optimizer {method!r}")
    if not np.isfinite(best["f"]):
        raise ValueError("every evaluated point has zero posterior density (infeasible start)")
    x = best["x"]

    def f(z):
        v = float(log_post(z))
        return v if np.isfinite(v) else -1e300

    with np.errstate(all="ignore"):
        H = -fd_hessian(f, x, rel_step)
    cov, fallback = _invert_curvature(H, eps)
    return MapResult(x, cov, best["f"], best["n"], method_l, fallback, str(res.message))


def _invert_curvature(H, eps):
    p = H.shape[0]
    if np.all(np.isfinite(H)):
        Hs = 0.5 * (H + H.T)
        try:
            cov = np.linalg.inv(Hs)
            cov = 0.5 * (cov + cov.T) + eps * np.eye(p)
            np.linalg.cholesky(cov)
            if np.all(np.isfinite(cov)):
                return cov, False
        except np.linalg.LinAlgError:
            pass
    diag = np.diag(H).copy()
    good = np.isfinite(diag) & (diag > 0) & (diag < 1e300)
    out = np.full(p, 1e-2)
    out[good] = 1.0 / diag[good]
    return np.diag(out), True


__all__ = [
    "Prior", "ImproperUniform", "HalfNormal", "Laplace", "Normal", "PriorSpec", "log_prior",
    "PosteriorHandle", "LIKELIHOODS", "MapResult", "find_map", "fd_hessian",
]
