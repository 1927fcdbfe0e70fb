"""Delayed-rejection adaptive Metropolis (DRAM) and chain diagnostics.

Stage one is a Gaussian random walk with covariance ``C``.  After a
rejection a second, narrower proposal with covariance ``gamma * C`` is tried
and accepted with the two-stage delayed-rejection probability, which keeps
the target invariant.  From iteration ``n0`` on, ``C`` is replaced by the
scaled running covariance of the chain, ``s_d (cov + eps I)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .models import make_rng

STAGE_REJECT, STAGE_ONE, STAGE_TWO = 0, 1, 2


@dataclass
class DramConfig:
    """Sampler settings.

    ``stage2_scale`` selects whether ``gamma`` multiplies the proposal
    covariance ("cov", default) or the proposal standard deviation ("std",
    i.e. covariance ``gamma**2 C``).
    """

    n_samples: int
    n0: int = 200
    gamma: float = 0.01
    adapt_interval: int = 1
    s_d: Optional[float] = None
    seed: int = 0
    eps: float = 1e-10
    stage2_scale: str = "cov"
    record_proposals: bool = False

    def __post_init__(self):
        if not self.n_samples > self.n0 >= 1:
            raise ValueError("need n_samples > n0 >= 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.adapt_interval < 1:
            raise ValueError("adapt_interval must be >= 1")
        if self.stage2_scale not in ("cov", "std"):
            raise ValueError("stage2_scale must be 'cov' or 'std'")

    def scale(self, p):
        return self.s_d if self.s_d is not None else 2.38**2 / p

    def to_dict(self):
        return asdict(self)


@dataclass
class Chain:
    """Samples ``1..n_samples`` of a DRAM run; ``theta0`` is the starting point."""

    samples: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    stage: np.ndarray
    proposal_cov_final: np.ndarray
    theta0: np.ndarray
    log_post0: float
    config: Optional[DramConfig] = None
    n_target_evals: int = 0
    proposal_history: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def p(self):
        return self.samples.shape[1]

    def after_burn_in(self, burn_in=None):
        b = default_burn_in(self.n) if burn_in is None else int(burn_in)
        if not 0 <= b < self.n:
            raise ValueError("burn_in must lie in [0, n_samples)")
        return self.samples[b:], self.log_post[b:]

    def to_csv(self, path, sidecar=True, extra=None):
        header = ["idx"] + [f"theta{i + 1}" for i in range(self.p)] + [
            "log_post", "accepted", "stage"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                w.writerow([i + 1] + [repr(float(v)) for v in self.samples[i]]
                           + [repr(float(self.log_post[i])), int(self.accepted[i]),
                              int(self.stage[i])])
        if sidecar:
            meta = {
                "config": self.config.to_dict() if self.config else None,
                "seed": self.config.seed if self.config else None,
                "theta0": self.theta0.tolist(),
                "log_post0": self.log_post0,
                "proposal_cov_final": self.proposal_cov_final.tolist(),
                "n_target_evals": self.n_target_evals,
                "diagnostics": chain_diagnostics(self).to_dict(),
            }
            if extra:
                meta.update(extra)
            with open(str(path) + ".json", "w") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:1] != ["idx"] or rows[0][-3:] != ["log_post", "accepted", "stage"]:
            raise ValueError(f"{path}: not a chain file (bad header)")
        p = len(rows[0]) - 4
        data = []
        for i, r in enumerate(rows[1:], start=2):
            try:
                if len(r) != p + 4:
                    raise ValueError(f"expected {p + 4} fields, got {len(r)}")
                data.append([float(v) for v in r])
            except ValueError as exc:
                raise ValueError(f"{path}: row {i}: {exc}") from None
        if not data:
            raise ValueError(f"{path}: chain has no samples")
        arr = np.array(data)
        samples = arr[:, 1:p + 1]
        return cls(samples, arr[:, p + 1], arr[:, p + 2].astype(bool), arr[:, p + 3].astype(int),
                   np.full((p, p), np.nan), samples[0].copy(), float(arr[0, p + 1]))


def default_burn_in(n):
    return int(0.2 * n)


def _chol(C):
    return np.linalg.cholesky(0.5 * (C + C.T))


def dram_sample(log_target: Callable, theta0, cov0, cfg: DramConfig) -> Chain:
    """Draw ``cfg.n_samples`` states with DRAM.

    Parameters
    ----------
    log_target : callable
        Unnormalized log density; ``-inf`` marks zero density.
    theta0 : array_like
        Starting point with finite log density.
    cov0 : array_like
        Initial (pre-adaptation) proposal covariance, symmetric positive definite.
    cfg : DramConfig

    Returns
    -------
    Chain
    """
    x = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
    p = x.size
    cov0 = np.atleast_2d(np.asarray(cov0, dtype=float))
    if cov0.shape != (p, p):
        raise ValueError("proposal covariance must be p x p")
    if not np.allclose(cov0, cov0.T, rtol=1e-10, atol=0):
        raise ValueError("proposal covariance must be symmetric")
    try:
        L = _chol(cov0 + cfg.eps * np.eye(p))
    except np.linalg.LinAlgError:
        raise ValueError("proposal covariance is not positive definite") from None
    C = cov0.copy()
    Cinv = np.linalg.inv(C)
    lpx = float(log_target(x))
    if not np.isfinite(lpx):
        raise ValueError("starting point has zero posterior density")
    lp0 = lpx
    N = cfg.n_samples
    rng = make_rng(cfg.seed)
    z1 = rng.standard_normal((N, p))
    z2 = rng.standard_normal((N, p))
    lu1 = np.log(rng.uniform(size=N))
    lu2 = np.log(rng.uniform(size=N))
    g2 = cfg.gamma if cfg.stage2_scale == "cov" else cfg.gamma**2
    sg = np.sqrt(g2)
    sd = cfg.scale(p)

    samples = np.empty((N, p))
    log_post = np.empty(N)
    accepted = np.zeros(N, dtype=bool)
    stage = np.zeros(N, dtype=np.int8)
    history = np.empty((N, p, p)) if cfg.record_proposals else None
    # running moments over theta0 and the chain so far (Welford)
    mean, M2, count = x.copy(), np.zeros((p, p)), 1
    n_evals = 1

    for t in range(N):
        if history is not None:
            history[t] = C
        y1 = x + L @ z1[t]
        lp1 = float(log_target(y1))
        n_evals += 1
        a1 = lp1 - lpx
        if lu1[t] < min(0.0, a1):
            x, lpx, accepted[t], stage[t] = y1, lp1, True, STAGE_ONE
        else:
            y2 = x + sg * (L @ z2[t])
            lp2 = float(log_target(y2))
            n_evals += 1
            # if lp1 >= lp2 the reverse stage-one move always accepts, so alpha2 = 0
            if np.isfinite(lp2) and not (np.isfinite(lp1) and lp1 >= lp2):
                d21, d01 = y1 - y2, y1 - x
                log_q = -0.5 * (d21 @ Cinv @ d21) + 0.5 * (d01 @ Cinv @ d01)
                # log(1 - alpha1(y2, y1)) - log(1 - alpha1(x, y1))
                num = np.log1p(-np.exp(min(0.0, lp1 - lp2))) if np.isfinite(lp1) else 0.0
                den = np.log1p(-np.exp(min(0.0, a1))) if np.isfinite(lp1) else 0.0
                a2 = lp2 - lpx + log_q + num - den
                if lu2[t] < min(0.0, a2):
                    x, lpx, accepted[t], stage[t] = y2, lp2, True, STAGE_TWO
        samples[t] = x
        log_post[t] = lpx

        count += 1
        delta = x - mean
        mean = mean + delta / count
        M2 = M2 + np.outer(delta, x - mean)
        it = t + 1
        if it >= cfg.n0 and it % cfg.adapt_interval == 0:
            C_new = sd * (M2 / (count - 1) + cfg.eps * np.eye(p))
            try:
                L_new = _chol(C_new)
                Cinv = np.linalg.inv(C_new)
                C, L = C_new, L_new
            except np.linalg.LinAlgError:
                pass
    return Chain(samples, log_post, accepted, stage, C, np.atleast_1d(theta0).astype(float),
                 lp0, cfg, n_evals, history)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def autocorrelation(x):
    """Normalized autocorrelation of a 1-D series via FFT."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n]
    return acov / acov[0]


def effective_sample_size(x):
    """ESS with Geyer's initial positive sequence estimator (1 for a constant series)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 or np.ptp(x) == 0:
        return 1.0
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))


@dataclass
class ChainReport:
    burn_in: int
    acceptance: float
    acceptance_stage1: float
    acceptance_stage2: float
    ess: np.ndarray
    mean: np.ndarray
    quantiles: dict

    def to_dict(self):
        return {"burn_in": self.burn_in, "acceptance": self.acceptance,
                "acceptance_stage1": self.acceptance_stage1,
                "acceptance_stage2": self.acceptance_stage2,
                "ess": self.ess.tolist(), "mean": self.mean.tolist(),
                "quantiles": {k: v.tolist() for k, v in self.quantiles.items()}}


def chain_diagnostics(chain: Chain, burn_in=None, probs=(0.025, 0.5, 0.975)) -> ChainReport:
    """Acceptance rates over the whole chain; ESS, mean and quantiles after burn-in.

    The stage-two rate is the fraction of second-stage attempts (that is, of
    stage-one rejections) that were accepted.
    """
    b = default_burn_in(chain.n) if burn_in is None else int(burn_in)
    kept, _ = chain.after_burn_in(b)
    n = chain.n
    s1 = int(np.sum(chain.stage == STAGE_ONE))
    s2 = int(np.sum(chain.stage == STAGE_TWO))
    attempts2 = n - s1
    ess = np.array([effective_sample_size(kept[:, j]) for j in range(chain.p)])
    q = {f"q{100 * pr:g}": np.quantile(kept, pr, axis=0) for pr in probs}
    return ChainReport(b, float(np.mean(chain.accepted)), s1 / n,
                       s2 / attempts2 if attempts2 else 0.0, ess, kept.mean(axis=0), q)


__all__ = ["DramConfig", "Chain", "dram_sample", "chain_diagnostics", "ChainReport",
           "effective_sample_size", "autocorrelation", "default_burn_in",
           "STAGE_ONE", "STAGE_TWO", "STAGE_REJECT"]
