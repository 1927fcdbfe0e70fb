"""Marginal log-likelihood of a state-space model.

The Kalman filter gives the exact marginal likelihood for linear-Gaussian
models, the unscented filter approximates it for nonlinear ones, and two
closed forms cover the degenerate cases of zero process noise and noiseless
invertible observations.

Every likelihood soft-fails: a numerical breakdown (non-positive-definite
covariance, non-finite state) yields ``-inf`` instead of an exception so a
sampler can simply reject the proposal.

Two code paths exist for the filters.  The numpy path below is the readable
reference and is used whenever intermediate beliefs are requested
(``store=True``); otherwise the compiled loops in :mod:`bayesid._kernels`
are used.  Both perform the same arithmetic in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from . import _kernels as K
from .models import ObservationSet, StateSpaceModel

EPS = 1e-10
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("belief covariance must be d x d")


@dataclass
class SigmaPointSet:
    points: np.ndarray  # (2d+1, d)
    w_mean: np.ndarray
    w_cov: np.ndarray
    lam: float


@dataclass
class FilterResult:
    """Output of a filter pass.

    ``beliefs[k]`` is the filtered belief after processing ``data.times[k]``
    (the predicted belief when that observation is missing) and
    ``evidences`` holds ``(k, mu_k, S_k)`` for every scored observation.
    """

    log_lik: float
    beliefs: List[GaussianBelief] = field(default_factory=list)
    predicted: List[GaussianBelief] = field(default_factory=list)
    evidences: List[Tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)

    def recompute_log_lik(self, data: ObservationSet):
        """Sum of evidence log-densities, recomputed from the stored (mu, S)."""
        total = 0.0
        for k, mu, S in self.evidences:
            total += gauss_logpdf(data.values[k] - mu, S)
        return total


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def symmetrize(P, eps=EPS):
    return 0.5 * (P + P.T) + eps * np.eye(P.shape[0])


def gauss_logpdf(r, S):
    """log N(r; 0, S) via the Cholesky factor of S."""
    L = cholesky(S, lower=True)
    z = solve_triangular(L, r, lower=True)
    return -0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * r.size * LOG_2PI


def _chol(A):
    L, ok = K.cholesky(np.ascontiguousarray(A, dtype=float))
    if not ok:
        raise LinAlgError("matrix is not positive definite")
    return L


def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def _schedule(model: StateSpaceModel, data: ObservationSet, t0: float):
    """Number of model steps between consecutive observation times."""
    gaps = np.diff(np.concatenate([[t0], data.times])) / model.dt
    steps = np.rint(gaps)
    if np.any(steps < 0) or np.any(np.abs(gaps - steps) > 1e-6 * np.maximum(1.0, steps)):
        raise ValueError("observation times must lie on the model step grid after t0")
    return steps.astype(np.int64)


def _resolve_init(model, theta_meas, data, init, t0):
    """Initial belief, start time and the first observation index to score."""
    if init is not None:
        if t0 is None:
            t0 = data.times[0] - model.dt
        return init, float(t0), 0
    if not model.obs_identity:
        raise ValueError("an initial belief is required when h is not the identity")
    if not data.present[0]:
        raise ValueError("the default initial belief needs an observation at the first time")
    belief = GaussianBelief(data.values[0], model.meas_cov(theta_meas))
    return belief, float(data.times[0]), 1


# ---------------------------------------------------------------------------
# Kalman filter
# ---------------------------------------------------------------------------


def kf_marginal_loglik(model: StateSpaceModel, theta, data: ObservationSet,
                       init: Optional[GaussianBelief] = None, t0=None, eps=EPS,
                       store=False) -> FilterResult:
    """Exact marginal log-likelihood of a linear-Gaussian model.

    Parameters
    ----------
    model : StateSpaceModel
        Must expose ``transition_matrix`` and ``observation_matrix``.
    theta : array_like
        Full parameter vector.
    data : ObservationSet
    init : GaussianBelief, optional
        Belief at ``t0``.  If omitted (identity ``h`` only), the first
        observation is used as the mean, ``Gamma(theta)`` as the covariance,
        and that observation is not scored.
    t0 : float, optional
        Time of ``init``; defaults to one model step before the first
        observation.
    eps : float
        Nugget added to every formed covariance.
    store : bool
        Keep the per-step beliefs and evidences.
    """
    if not model.linear:
        raise ValueError("the Kalman filter needs a model that is linear in the state")
    th_dyn, th_obs, th_proc, th_meas = model.split(theta)
    init, t0, first = _resolve_init(model, th_meas, data, init, t0)
    steps = _schedule(model, data, t0)
    try:
        A = np.asarray(model.transition_matrix(th_dyn), dtype=float)
        H = np.asarray(model.observation_matrix(th_obs), dtype=float)
        Q = np.asarray(model.proc_cov(th_proc), dtype=float)
        R = np.asarray(model.meas_cov(th_meas), dtype=float)
    except (ValueError, FloatingPointError):
        return FilterResult(-np.inf)
    if not _finite(A, H, Q, R, init.mean, init.cov):
        return FilterResult(-np.inf)
    present = data.present.copy()
    present[:first] = False
    if store:
        return _kf_reference(A, H, Q, R, init, data.values, present, steps, eps)
    ll = K.kf_loglik(A, H, Q, R, init.mean, init.cov, np.nan_to_num(data.values),
                     present, steps, eps)
    return FilterResult(float(ll))


def _kf_reference(A, H, Q, R, init, Y, present, steps, eps):
    m, P = init.mean.copy(), init.cov.copy()
    out = FilterResult(0.0)
    try:
        for k in range(Y.shape[0]):
            for _ in range(steps[k]):
                m = A @ m
                P = symmetrize(A @ P @ A.T + Q, eps)
            out.predicted.append(GaussianBelief(m, P))
            if present[k]:
                mu = H @ m
                PHt = P @ H.T
                S = symmetrize(H @ PHt + R, eps)
                L = _chol(S)
                r = Y[k] - mu
                out.log_lik += K.gauss_logpdf_chol(r, L)
                gain = K.chol_solve_mat(L, np.ascontiguousarray(PHt.T)).T
                m = m + gain @ r
                P = symmetrize(P - gain @ PHt.T, eps)
                out.evidences.append((k, mu, S))
                if not (np.isfinite(out.log_lik) and _finite(m, P)):
                    return FilterResult(-np.inf)
            out.beliefs.append(GaussianBelief(m, P))
    except LinAlgError:
        return FilterResult(-np.inf)
    return out


# ---------------------------------------------------------------------------
# unscented filter
# ---------------------------------------------------------------------------


def ukf_weights(d, alpha=1e-3, kappa=0.0, beta=1.0):
    """Mean/covariance weights and ``lambda`` of the scaled unscented transform."""
    lam = alpha**2 * (d + kappa) - d
    wm = np.full(2 * d + 1, 1.0 / (2.0 * (d + lam)))
    wc = wm.copy()
    wm[0] = lam / (d + lam)
    wc[0] = lam / (d + lam) + (1.0 - alpha**2 + beta)
    return wm, wc, lam


def ukf_sigma_points(belief: GaussianBelief, alpha=1e-3, kappa=0.0, beta=1.0,
                     eps=EPS) -> SigmaPointSet:
    """Sigma points from the columns of the lower Cholesky factor of the covariance.

    The nugget ``eps`` is only added if the covariance itself is not
    numerically positive definite.
    """
    d = belief.mean.size
    wm, wc, lam = ukf_weights(d, alpha, kappa, beta)
    L, ok = K.cholesky(np.ascontiguousarray(belief.cov))
    if not ok:
        L = _chol(symmetrize(belief.cov, eps))
    pts = K.sigma_points(belief.mean, L, d + lam)
    return SigmaPointSet(pts, wm, wc, lam)


def unscented_transform(points, wm, wc):
    """Weighted mean and covariance of transformed sigma points."""
    mu = K.weighted_mean(points, wm)
    return mu, K.weighted_cross(points, mu, points, mu, wc)


def ukf_marginal_loglik(model: StateSpaceModel, theta, data: ObservationSet,
                        init: Optional[GaussianBelief] = None, alpha=1e-3, kappa=0.0,
                        beta=1.0, t0=None, eps=EPS, strict=False,
                        store=False) -> FilterResult:
    """Unscented approximation of the marginal log-likelihood.

    Sigma points are regenerated from the predicted belief before the
    observation map is applied.  With ``strict=True`` the covariance update
    uses ``P - K S^-1 K^T`` (gain ``K = C S^-1``) instead of the standard
    ``P - K S K^T``; the strict variant is kept for comparison only.

    Other arguments are as in :func:`kf_marginal_loglik`.
    """
    th_dyn, th_obs, th_proc, th_meas = model.split(theta)
    init, t0, first = _resolve_init(model, th_meas, data, init, t0)
    steps = _schedule(model, data, t0)
    d = model.d
    wm, wc, lam = ukf_weights(d, alpha, kappa, beta)
    try:
        Q = np.asarray(model.proc_cov(th_proc), dtype=float)
        R = np.asarray(model.meas_cov(th_meas), dtype=float)
    except (ValueError, FloatingPointError):
        return FilterResult(-np.inf)
    if not _finite(Q, R, init.mean, init.cov, th_dyn, th_obs):
        return FilterResult(-np.inf)
    present = data.present.copy()
    present[:first] = False
    if store or model.kernel is None:
        return _ukf_reference(model, th_dyn, th_obs, Q, R, init, data.values, present,
                              steps, wm, wc, d + lam, eps, strict, store)
    kn = model.kernel
    ll = K.ukf_loglik(kn.dyn_code, np.ascontiguousarray(th_dyn), kn.dyn_aux, kn.obs_code,
                      np.ascontiguousarray(th_obs), kn.obs_aux, Q, R, init.mean, init.cov,
                      np.nan_to_num(data.values), present, steps, wm, wc, d + lam, eps,
                      bool(strict))
    return FilterResult(float(ll))


def _ukf_reference(model, th_dyn, th_obs, Q, R, init, Y, present, steps, wm, wc, c, eps,
                   strict, store):
    m, P = init.mean.copy(), init.cov.copy()
    out = FilterResult(0.0)
    try:
        for k in range(Y.shape[0]):
            for _ in range(steps[k]):
                Xs = K.sigma_points(m, _chol(P), c)
                Xh = np.asarray(model.dynamics(Xs, th_dyn), dtype=float)
                if not _finite(Xh):
                    return FilterResult(-np.inf)
                m, Pp = unscented_transform(Xh, wm, wc)
                P = symmetrize(Pp + Q, eps)
            if store:
                out.predicted.append(GaussianBelief(m, P))
            if present[k]:
                Xs = K.sigma_points(m, _chol(P), c)
                Yh = np.asarray(model.observation(Xs, th_obs), dtype=float)
                if not _finite(Yh):
                    return FilterResult(-np.inf)
                mu, Sp = unscented_transform(Yh, wm, wc)
                S = symmetrize(Sp + R, eps)
                C = K.weighted_cross(Xs, m, Yh, mu, wc)
                Ls = _chol(S)
                r = Y[k] - mu
                out.log_lik += K.gauss_logpdf_chol(r, Ls)
                gain = K.chol_solve_mat(Ls, np.ascontiguousarray(C.T)).T
                m = m + gain @ r
                if strict:
                    ksinv = K.chol_solve_mat(Ls, np.ascontiguousarray(gain.T)).T
                    P = symmetrize(P - ksinv @ gain.T, eps)
                else:
                    P = symmetrize(P - gain @ C.T, eps)
                if store:
                    out.evidences.append((k, mu, S))
                if not (np.isfinite(out.log_lik) and _finite(m, P)):
                    return FilterResult(-np.inf)
            if store:
                out.beliefs.append(GaussianBelief(m, P))
    except LinAlgError:
        return FilterResult(-np.inf)
    return out


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def rollout(model: StateSpaceModel, theta_dyn, x0, steps):
    """Deterministic states after the cumulative numbers of ``steps``; shape (len(steps), d)."""
    x = np.asarray(x0, dtype=float)[None, :]
    out = np.empty((len(steps), model.d))
    with np.errstate(all="ignore"):
        for k, s in enumerate(steps):
            for _ in range(int(s)):
                x = model.dynamics(x, theta_dyn)
            out[k] = x[0]
    return out


def det_loglik(model: StateSpaceModel, theta, data: ObservationSet, x0, t0=None) -> float:
    """Log-likelihood of a deterministic model observed with Gaussian noise.

    The state is rolled out from ``x0`` at ``t0`` (default one step before the
    first observation) and every present observation is scored against it.
    """
    th_dyn, th_obs, _, th_meas = model.split(theta)
    if t0 is None:
        t0 = data.times[0] - model.dt
    steps = _schedule(model, data, float(t0))
    states = rollout(model, th_dyn, x0, steps)[data.present]
    with np.errstate(all="ignore"):
        pred = np.asarray(model.observation(states, th_obs), dtype=float)
    if not _finite(pred):
        return -np.inf
    try:
        L = _chol(np.asarray(model.meas_cov(th_meas), dtype=float))
    except LinAlgError:
        return -np.inf
    resid = data.values[data.present] - pred
    z = solve_triangular(L, resid.T, lower=True)
    n = resid.shape[0]
    val = -0.5 * np.sum(z * z) - 0.5 * n * model.m * LOG_2PI - n * np.log(np.diag(L)).sum()
    return float(val) if np.isfinite(val) else -np.inf


def noiseless_loglik(model: StateSpaceModel, theta, data: ObservationSet) -> float:
    """Log-likelihood when observations are exact and ``h`` is invertible.

    Each recovered state is scored against the one-step propagation of the
    previous one; the first observation only fixes the initial condition and
    contributes nothing.  Data must be dense and spaced by ``model.dt``.
    """
    if not model.invertible_obs:
        raise ValueError("noiseless likelihood needs an invertible observation operator")
    if not data.dense:
        raise ValueError("noiseless likelihood needs dense observations")
    if data.n < 2:
        raise ValueError("noiseless likelihood needs at least two observations")
    th_dyn, th_obs, th_proc, _ = model.split(theta)
    steps = _schedule(model, data, data.times[0])
    if np.any(steps[1:] != 1):
        raise ValueError("noiseless likelihood needs observations one model step apart")
    if model.obs_identity:
        X = data.values
        log_jac = 0.0
    else:
        X = np.asarray(model.obs_inverse(data.values, th_obs), dtype=float)
        log_jac = float(np.sum(model.obs_log_det_jac_inv(data.values[1:], th_obs)))
    with np.errstate(all="ignore"):
        pred = np.asarray(model.dynamics(X[:-1], th_dyn), dtype=float)
    if not _finite(pred):
        return -np.inf
    try:
        L = _chol(np.asarray(model.proc_cov(th_proc), dtype=float))
    except LinAlgError:
        return -np.inf
    resid = X[1:] - pred
    z = solve_triangular(L, resid.T, lower=True)
    n = resid.shape[0]
    val = (log_jac - 0.5 * np.sum(z * z) - 0.5 * n * model.d * LOG_2PI
           - n * np.log(np.diag(L)).sum())
    return float(val) if np.isfinite(val) else -np.inf


__all__ = [
    "EPS", "GaussianBelief", "SigmaPointSet", "FilterResult", "kf_marginal_loglik",
    "ukf_marginal_loglik", "ukf_sigma_points", "ukf_weights", "unscented_transform",
    "det_loglik", "noiseless_loglik", "rollout", "gauss_logpdf", "symmetrize",
]
