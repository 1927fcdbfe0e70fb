"""Posterior-predictive rollouts and point estimators built from a chain.

Rollouts are deterministic: each posterior draw of the dynamics parameters
is propagated from a common initial state without process noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mcmc import Chain, default_burn_in
from .models import StateSpaceModel, Trajectory, make_rng


@dataclass
class PredictiveEnsemble:
    t_grid: np.ndarray
    rollouts: np.ndarray  # (n_draws, len(t_grid), d)
    source_sample_idx: np.ndarray
    valid: np.ndarray

    @property
    def n_invalid(self):
        return int(np.sum(~self.valid))

    def to_csv(self, path):
        d = self.rollouts.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["draw", "t"] + [f"x{i + 1}" for i in range(d)] + ["valid"])
            for k, traj in enumerate(self.rollouts):
                for t, x in zip(self.t_grid, traj):
                    w.writerow([k, repr(float(t))] + [repr(float(v)) for v in x]
                               + [int(self.valid[k])])


def step_counts(t_grid, t0, dt):
    """Model steps from ``t0`` to each time of ``t_grid`` (which must be on the step grid)."""
    t_grid = np.asarray(t_grid, dtype=float)
    k = (t_grid - t0) / dt
    ki = np.rint(k)
    if np.any(ki < 0) or np.any(np.abs(k - ki) > 1e-6 * np.maximum(1.0, ki)):
        raise ValueError("prediction times must lie on the model step grid after t0")
    if ki.size > 1 and np.any(np.diff(ki) <= 0):
        raise ValueError("prediction times must be strictly increasing")
    return ki.astype(int)


def rollout_batch(model: StateSpaceModel, theta_dyn_rows, x0, t_grid, t0=None):
    """Deterministic rollouts for many dynamics-parameter rows.

    Returns an array ``(n_rows, len(t_grid), d)``; a rollout that becomes
    non-finite is filled with NaN from that point on.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    t0 = t_grid[0] if t0 is None else float(t0)
    ks = step_counts(t_grid, t0, model.dt)
    rows = np.atleast_2d(theta_dyn_rows)
    out = np.full((rows.shape[0], t_grid.size, model.d), np.nan)
    x0 = np.asarray(x0, dtype=float)
    with np.errstate(all="ignore"):
        for r, th in enumerate(rows):
            x = x0[None, :]
            k_now = 0
            for j, k in enumerate(ks):
                for _ in range(k - k_now):
                    x = model.dynamics(x, th)
                k_now = k
                if not np.all(np.isfinite(x)):
                    break
                out[r, j] = x[0]
    return out


def posterior_predictive(chain: Chain, model: StateSpaceModel, x0, t_grid, n_draws, seed,
                         burn_in=None, t0=None) -> PredictiveEnsemble:
    """Roll out ``n_draws`` parameter samples drawn uniformly (with replacement)
    from the post-burn-in chain.

    Parameters
    ----------
    x0 : array_like
        State at ``t0`` (default ``t_grid[0]``).  Passing the last filtered
        state continues a forecast; any other state gives an alternate
        initial condition.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    b = default_burn_in(chain.n) if burn_in is None else int(burn_in)
    if chain.n - b < 1:
        raise ValueError("no post-burn-in samples")
    idx = b + make_rng(seed).integers(0, chain.n - b, size=n_draws)
    th = chain.samples[idx][:, model.partition.dyn]
    roll = rollout_batch(model, th, x0, t_grid, t0)
    valid = np.all(np.isfinite(roll), axis=(1, 2))
    return PredictiveEnsemble(np.asarray(t_grid, dtype=float), roll, idx, valid)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mean:
    pass


@dataclass(frozen=True)
class QuantileBand:
    lo: float = 0.025
    hi: float = 0.975

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi <= 1:
            raise ValueError("need 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class Mode:
    grid_size: int = 512
    min_rollouts: int = 30


@dataclass
class Reduction:
    t: np.ndarray
    est: np.ndarray
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def to_csv(self, path):
        d = self.est.shape[1]
        head = ["t"] + [f"est_{i + 1}" for i in range(d)]
        if self.lo is not None:
            head += [f"lo_{i + 1}" for i in range(d)] + [f"hi_{i + 1}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for k, t in enumerate(self.t):
                row = [repr(float(t))] + [repr(float(v)) for v in self.est[k]]
                if self.lo is not None:
                    row += [repr(float(v)) for v in self.lo[k]] + [repr(float(v))
                                                                    for v in self.hi[k]]
                w.writerow(row)


def kde_mode(values, grid_size=512):
    """Location of the maximum of a Gaussian KDE (Silverman bandwidth) along axis 0.

    ``values`` has shape ``(n, ...)``; the mode is computed independently for
    every trailing index.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    flat = v.reshape(n, -1)
    out = np.empty(flat.shape[1])
    # scipy's gaussian_kde Silverman factor for one dimension
    factor = (n * 3.0 / 4.0) ** (-1.0 / 5.0)
    u = np.linspace(0.0, 1.0, grid_size)
    for j in range(flat.shape[1]):
        x = flat[:, j]
        lo, hi = x.min(), x.max()
        sd = x.std(ddof=1) if n > 1 else 0.0
        if hi == lo or sd == 0:
            out[j] = lo
            continue
        bw = factor * sd
        grid = lo + (hi - lo) * u
        dens = np.exp(-0.5 * ((grid[:, None] - x[None, :]) / bw) ** 2).sum(axis=1)
        out[j] = grid[np.argmax(dens)]
    return out.reshape(v.shape[1:])


def reduce(ensemble: PredictiveEnsemble, rule) -> Reduction:
    """Pointwise reduction over the valid rollouts.

    ``Mean`` averages; ``QuantileBand`` returns the median as the estimate and
    the empirical quantiles as the band; ``Mode`` is the maximum of a 1-D KDE
    per state and time.
    """
    R = ensemble.rollouts[ensemble.valid]
    if R.shape[0] == 0:
        raise ValueError("ensemble has no valid rollouts")
    t = ensemble.t_grid
    if isinstance(rule, Mean):
        return Reduction(t, R.mean(axis=0))
    if isinstance(rule, QuantileBand):
        lo, med, hi = np.quantile(R, [rule.lo, 0.5, rule.hi], axis=0)
        return Reduction(t, med, lo, hi)
    if isinstance(rule, Mode):
        if R.shape[0] < rule.min_rollouts:
            raise ValueError(f"Mode needs at least {rule.min_rollouts} valid rollouts")
        return Reduction(t, kde_mode(R, rule.grid_size))
    raise TypeError(f"unknown reduction rule {rule!r}")


def summary_reduction(ensemble: PredictiveEnsemble, lo=0.025, hi=0.975) -> Reduction:
    """Mean estimate with a quantile band (the form written by the command line)."""
    band = reduce(ensemble, QuantileBand(lo, hi))
    return Reduction(ensemble.t_grid, reduce(ensemble, Mean()).est, band.lo, band.hi)


# ---------------------------------------------------------------------------
# parameter estimators and scores
# ---------------------------------------------------------------------------


def theta_estimators(chain: Chain, burn_in=None):
    """Posterior mean and the highest-log-posterior sample after burn-in."""
    kept, lp = chain.after_burn_in(burn_in)
    if kept.shape[0] == 0:
        raise ValueError("empty chain")
    return {"theta_mean": kept.mean(axis=0), "theta_map": kept[int(np.argmax(lp))].copy()}


def mse_at_observations(est: Trajectory, truth: Trajectory, obs_times) -> float:
    """Mean squared error over all states at the observation times."""
    e = est.at(obs_times)
    tr = truth.at(obs_times)
    if e.shape != tr.shape:
        raise ValueError("estimate and truth have different state dimensions")
    return float(np.mean((e - tr) ** 2))


__all__ = ["PredictiveEnsemble", "posterior_predictive", "rollout_batch", "step_counts",
           "Mean", "QuantileBand", "Mode", "Reduction", "reduce", "summary_reduction",
           "kde_mode", "theta_estimators", "mse_at_observations"]
