"""Desk-scale studies: objective costs and landscapes, MSE-ratio sweeps, flop
counts, filter timing, and ready-made recovery problems for the benchmark
systems.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .baselines import SindyConfig, SnapshotPair, dmd_fit, sindy_fit, tdmd_fit
from .filters import GaussianBelief
from .mcmc import Chain, DramConfig, dram_sample
from .models import (DictionaryLibrary, ObservationSet, Partition, StateSpaceModel,
                     Trajectory, TruthSystemSpec, dictionary_eval, make_cov, make_model,
                     observe, simulate_truth)
from .posterior import (ImproperUniform, Laplace, MapResult, PosteriorHandle,
                        PriorSpec, find_map)
from .prediction import Mean, posterior_predictive, reduce, rollout_batch


def derive_seed(*keys):
    """Stable 32-bit seed from integer keys (numpy SeedSequence hashing)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# frequency least-squares cost
# ---------------------------------------------------------------------------


def ls_frequency_cost(omega, T, quad_step=1e-3):
    """Composite trapezoid value of the integral of (cos 2t - cos omega t)^2 over [0, T]."""
    if T <= 0 or quad_step <= 0:
        raise ValueError("T and quad_step must be positive")
    n = max(int(np.ceil(T / quad_step - 1e-9)), 1)
    t = np.linspace(0.0, T, n + 1)
    return float(np.trapezoid((np.cos(2.0 * t) - np.cos(omega * t)) ** 2, t))


# ---------------------------------------------------------------------------
# objective landscapes for the two-parameter pendulum
# ---------------------------------------------------------------------------

OBJECTIVES = ("NoProcessNoise", "NoMeasurementNoise", "LogPosterior")


def oscillator_propagator(theta1, theta2, dt):
    """exp(dt [[0, theta1], [theta2, 0]]) in closed form."""
    a = theta1 * theta2
    Ac = np.array([[0.0, theta1], [theta2, 0.0]])
    if a < 0:
        w = np.sqrt(-a)
        return np.cos(w * dt) * np.eye(2) + (np.sin(w * dt) / w) * Ac
    if a > 0:
        w = np.sqrt(a)
        return np.cosh(w * dt) * np.eye(2) + (np.sinh(w * dt) / w) * Ac
    return np.eye(2) + dt * Ac


def landscape_model(dt, proc_var, meas_var) -> StateSpaceModel:
    """Linear model whose transition is the exact step of x1' = th1 x2, x2' = th2 x1."""
    _, Q = make_cov({"kind": "fixed", "value": proc_var}, 2)
    _, R = make_cov({"kind": "fixed", "value": meas_var}, 2)

    def transition(th):
        return oscillator_propagator(th[0], th[1], dt)

    def dynamics(x, th):
        return np.asarray(x) @ transition(th).T

    return StateSpaceModel(d=2, m=2, dt=dt, dynamics=dynamics, observation=lambda x, th: x,
                           proc_cov=Q, meas_cov=R, partition=Partition.from_sizes(2),
                           family="custom", transition_matrix=transition,
                           observation_matrix=lambda th: np.eye(2), obs_identity=True)


@dataclass
class LandscapeConfig:
    dt: float = 0.1
    x0: Sequence[float] = (0.1, -0.5)
    proc_var: float = 1e-4
    meas_var: float = 1e-2


def pendulum_data(n, dt=0.1, sigma=0.1, seed=0, x0=(0.1, -0.5), g=9.81, L=1.0):
    """Noisy observations of the linear pendulum at k dt, k = 1..n (state x0 at t = 0)."""
    spec = TruthSystemSpec("LinearPendulum", {"g": g, "L": L}, np.asarray(x0, dtype=float))
    truth = simulate_truth(spec, dt * np.arange(n + 1))
    full = observe(truth, spec, sigma, seed)
    return ObservationSet(full.times[1:], full.values[1:], noise_seed=seed), truth


def objective_landscape(objective, theta1_grid, theta2_grid, data: ObservationSet,
                        cfg: Optional[LandscapeConfig] = None):
    """Objective values on the grid; ``out[i, j]`` belongs to ``(theta1[i], theta2[j])``.

    The two least-squares objectives are costs (lower is better, ``+inf`` on
    blow-up); ``LogPosterior`` is the Kalman log marginal likelihood under a
    flat prior (higher is better, ``-inf`` on failure).
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; choose from {OBJECTIVES}")
    cfg = cfg or LandscapeConfig()
    t1 = np.asarray(theta1_grid, dtype=float)
    t2 = np.asarray(theta2_grid, dtype=float)
    out = np.empty((t1.size, t2.size))
    Y = data.values
    x0 = np.asarray(cfg.x0, dtype=float)
    steps = np.rint(data.times / cfg.dt).astype(int)
    if objective == "LogPosterior":
        model = landscape_model(cfg.dt, cfg.proc_var, cfg.meas_var)
        handle = PosteriorHandle(model, data, PriorSpec([ImproperUniform()] * 2), "KF",
                                 init=GaussianBelief(x0, model.meas_cov(None)), t0=0.0)
    with np.errstate(all="ignore"):
        for i, a in enumerate(t1):
            for j, b in enumerate(t2):
                if objective == "LogPosterior":
                    out[i, j] = handle(np.array([a, b]))
                    continue
                M = oscillator_propagator(a, b, cfg.dt)
                if objective == "NoMeasurementNoise":
                    r = Y[1:] - Y[:-1] @ M.T
                else:
                    x = x0.copy()
                    traj = np.empty_like(Y)
                    k_now = 0
                    for k, s in enumerate(steps):
                        for _ in range(s - k_now):
                            x = M @ x
                        k_now = s
                        traj[k] = x
                    r = Y - traj
                val = float(np.sum(r * r))
                out[i, j] = val if np.isfinite(val) else np.inf
    return out


def landscape_optimum(values, theta1_grid, theta2_grid, maximize):
    """Grid location of the best value."""
    v = np.where(np.isfinite(values), values, -np.inf if maximize else np.inf)
    flat = np.argmax(v) if maximize else np.argmin(v)
    i, j = np.unravel_index(flat, v.shape)
    return float(theta1_grid[i]), float(theta2_grid[j])


def write_landscape(path, values, theta1_grid, theta2_grid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta1", "theta2", "value"])
        for i, a in enumerate(theta1_grid):
            for j, b in enumerate(theta2_grid):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(values[i, j]))])


# ---------------------------------------------------------------------------
# Bayesian fitting pipeline
# ---------------------------------------------------------------------------


@dataclass
class BayesFit:
    map: MapResult
    chain: Chain


def fit_bayes(handle: PosteriorHandle, theta_init, n_samples, seed, map_method="nelder-mead",
              max_evals=2000, n0=200, gamma=0.01, map_restarts=0) -> BayesFit:
    """MAP search followed by a DRAM chain started at the MAP point.

    ``map_restarts`` reruns the optimizer from its own result, which helps
    the simplex method in higher dimensions.
    """
    res = find_map(handle, theta_init, method=map_method, max_evals=max_evals)
    for _ in range(map_restarts):
        res2 = find_map(handle, res.theta, method=map_method, max_evals=max_evals)
        if res2.log_post >= res.log_post:
            res = res2
    cfg = DramConfig(n_samples=n_samples, n0=n0, gamma=gamma, seed=seed)
    chain = dram_sample(handle, res.theta, res.neg_hessian_inv, cfg)
    return BayesFit(res, chain)


def staged_map(handle: PosteriorHandle, theta_init, stages, max_evals=150,
               map_method="nelder-mead") -> MapResult:
    """MAP search by data continuation.

    The optimizer is run on the posterior of the first ``stages[0]``
    observations, then restarted from that optimum with ``stages[1]``
    observations, and so on; the last stage should use all the data.  Short
    prefixes give smooth objectives for sensitive models (chaotic or
    pattern-forming dynamics) where the full-data posterior is too sharp
    for a direct search from a rough guess.
    """
    data = handle.data
    theta = np.asarray(theta_init, dtype=float)
    res = None
    for k in stages:
        k = min(int(k), data.n)
        sub = ObservationSet(data.times[:k], data.values[:k], data.present[:k], data.noise_seed)
        h = replace(handle, data=sub)
        res = find_map(h, theta, method=map_method, max_evals=max_evals)
        theta = res.theta
    if res is None:
        raise ValueError("stages must be non-empty")
    return res


def residual_variance(X, A):
    """Mean squared one-step residual of a linear propagator on snapshots X (n, d)."""
    r = X[1:] - X[:-1] @ A.T
    return float(np.mean(r * r))


# ---------------------------------------------------------------------------
# MSE-ratio sweep
# ---------------------------------------------------------------------------

ALGORITHMS = ("BayesKF", "BayesUKF", "DMD", "TDMD", "SINDy")


@dataclass
class SweepSpec:
    noise_levels: Sequence[float]
    n_values: Sequence[int]
    realizations: int = 20
    algorithms: Sequence[str] = ("BayesKF", "DMD")
    base_seed: int = 0
    horizon: float = 4.0
    x0: Sequence[float] = (0.1, -0.5)
    g: float = 9.81
    L: float = 1.0
    n_samples: int = 5000
    n_draws: int = 200
    max_evals: int = 2000
    drop_worst: bool = True
    sindy_threshold: float = 0.0

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not len(self.noise_levels) or not len(self.n_values):
            raise ValueError("noise_levels and n_values must be non-empty")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")
        if not any(a.startswith("Bayes") for a in self.algorithms):
            raise ValueError("a sweep needs at least one Bayesian algorithm")
        if self.drop_worst and self.realizations < 2:
            raise ValueError("drop_worst needs at least two realizations")

    def to_dict(self):
        d = asdict(self)
        d["noise_levels"] = list(map(float, self.noise_levels))
        d["n_values"] = list(map(int, self.n_values))
        d["algorithms"] = list(self.algorithms)
        d["x0"] = list(map(float, self.x0))
        return d


@dataclass
class SweepResult:
    spec: SweepSpec
    mse: dict  # (sigma, n, algorithm) -> array of per-realization MSE (NaN = failed)
    rows: list = field(default_factory=list)

    def to_csv(self, path):
        keys = ["sigma", "n", "algorithm", "mean_mse", "n_used", "n_failed", "baseline",
                "log10_ratio", "mean_log10_ratio"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, keys)
            w.writeheader()
            for row in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _log10_ratio(a, b):
    if a == 0 and b == 0:
        return float("nan")
    with np.errstate(divide="ignore"):
        return float(np.log10(a / b)) if b > 0 else float("inf")


def _mean_keep(values, drop_worst):
    v = np.asarray(values, dtype=float)
    ok = v[np.isfinite(v)]
    if drop_worst and ok.size > 1:
        ok = np.sort(ok)[:-1]
    return (float(np.mean(ok)) if ok.size else float("nan")), ok.size


def sweep_realization(spec: SweepSpec, sigma, n, seed):
    """Per-algorithm MSEs for one dataset; failures give NaN."""
    times = spec.horizon / n * np.arange(n)
    x0 = np.asarray(spec.x0, dtype=float)
    truth_spec = TruthSystemSpec("LinearPendulum", {"g": spec.g, "L": spec.L}, x0)
    truth = simulate_truth(truth_spec, times)
    obs = observe(truth, truth_spec, sigma, seed)
    dt = times[1] - times[0]
    X = obs.values
    pair = SnapshotPair.from_states(X)
    out = {}
    A_dmd = dmd_fit(pair)

    def linear_rollout(A):
        traj = np.empty((n, 2))
        x = x0.copy()
        for k in range(n):
            traj[k] = x
            x = A @ x
        return traj

    def mse(traj):
        val = float(np.mean((traj - truth.states) ** 2))
        return val if np.isfinite(val) else float("nan")

    for alg in spec.algorithms:
        try:
            if alg == "DMD":
                out[alg] = mse(linear_rollout(A_dmd))
            elif alg == "TDMD":
                out[alg] = mse(linear_rollout(tdmd_fit(pair)))
            elif alg == "SINDy":
                lib = DictionaryLibrary.polynomial(2, 1, include_constant=False)
                C = sindy_fit(obs, SindyConfig(lib, spec.sindy_threshold, 10, "forward"))
                model = make_model("EulerDictionary", {"d": 2, "dt": dt / 10, "library": lib})
                th = C.T.ravel()
                traj = rollout_batch(model, th[None, :], x0, times, 0.0)[0]
                out[alg] = mse(traj)
            else:
                kind = "KF" if alg == "BayesKF" else "UKF"
                model = make_model("LinearMatrix", {"d": 2, "dt": dt})
                v = max(residual_variance(X, A_dmd), 1e-12)
                theta_init = np.concatenate([A_dmd.ravel(), [0.5 * v, 0.5 * v]])
                handle = PosteriorHandle(model, obs, PriorSpec.for_model(model), kind)
                fit = fit_bayes(handle, theta_init, spec.n_samples, derive_seed(seed, 1),
                                max_evals=spec.max_evals)
                ens = posterior_predictive(fit.chain, model, x0, times, spec.n_draws,
                                           derive_seed(seed, 2))
                out[alg] = mse(reduce(ens, Mean()).est)
        except (ValueError, np.linalg.LinAlgError, FloatingPointError):
            out[alg] = float("nan")
    return out


def mse_ratio_sweep(spec: SweepSpec) -> SweepResult:
    """Mean prediction MSE and log10 (Bayes / baseline) ratios per (sigma, n).

    Predictions start from the true initial state and are scored at the
    observation times over ``spec.horizon``.  Each algorithm's worst
    realization is dropped when ``drop_worst`` is set.  ``log10_ratio`` is
    the ratio of the mean MSEs; ``mean_log10_ratio`` averages per-realization
    ratios.  A ratio 0/0 is reported as NaN.
    """
    mse = {}
    rows = []
    bayes = [a for a in spec.algorithms if a.startswith("Bayes")]
    for i_s, sigma in enumerate(spec.noise_levels):
        for i_n, n in enumerate(spec.n_values):
            runs = [sweep_realization(spec, sigma, n, derive_seed(spec.base_seed, i_s, i_n, r))
                    for r in range(spec.realizations)]
            for alg in spec.algorithms:
                mse[(sigma, n, alg)] = np.array([r[alg] for r in runs])
            means = {}
            for alg in spec.algorithms:
                v = mse[(sigma, n, alg)]
                means[alg], used = _mean_keep(v, spec.drop_worst)
                rows.append({"sigma": float(sigma), "n": int(n), "algorithm": alg,
                             "mean_mse": means[alg], "n_used": used,
                             "n_failed": int(np.sum(~np.isfinite(v))), "baseline": "",
                             "log10_ratio": "", "mean_log10_ratio": ""})
            for b in bayes:
                for base in spec.algorithms:
                    if base.startswith("Bayes"):
                        continue
                    per = [_log10_ratio(x, y) for x, y in
                           zip(mse[(sigma, n, b)], mse[(sigma, n, base)])]
                    per = np.array([p for p in per if np.isfinite(p)])
                    rows.append({"sigma": float(sigma), "n": int(n), "algorithm": b,
                                 "mean_mse": "", "n_used": int(per.size), "n_failed": "",
                                 "baseline": base,
                                 "log10_ratio": _log10_ratio(means[b], means[base]),
                                 "mean_log10_ratio": float(np.mean(per)) if per.size
                                 else float("nan")})
    return SweepResult(spec, mse, rows)


def ratio_table(result: SweepResult):
    """{(sigma, n, bayes_alg, baseline): log10 ratio of mean MSEs}."""
    return {(r["sigma"], r["n"], r["algorithm"], r["baseline"]): r["log10_ratio"]
            for r in result.rows if r["baseline"]}


# ---------------------------------------------------------------------------
# flop counts
# ---------------------------------------------------------------------------

FLOP_ALGORITHMS = ("KFPredict", "KFUpdate", "KFTotal", "UKFPredict", "UKFUpdate", "UKFTotal",
                   "DMD", "SparseRegression", "TDMDSolve")


@dataclass(frozen=True)
class FlopDims:
    d: int = 0
    m: int = 0
    p: int = 0
    n: int = 0
    F: int = 0
    H: int = 0
    r: int = 0

    def __post_init__(self):
        if min(self.d, self.m, self.p, self.n, self.F, self.H, self.r) < 0:
            raise ValueError("flop dimensions must be non-negative")


def flop_model(algorithm, dims: FlopDims) -> Fraction:
    """Closed-form flop count, exact in rational arithmetic.

    ``SparseRegression`` uses ``m`` as the number of states regressed jointly
    and ``p`` as the number of library parameters; ``TDMDSolve`` uses ``r``
    as the rank of the stacked snapshot matrix.
    """
    d, m, p, n = (Fraction(v) for v in (dims.d, dims.m, dims.p, dims.n))
    F, H, r = Fraction(dims.F), Fraction(dims.H), Fraction(dims.r)
    third = Fraction(1, 3)
    if algorithm == "KFPredict":
        return 4 * d**3 + d**2 - d
    if algorithm == "KFUpdate":
        return (2 * d**3 + third * m**3 + 6 * d**2 * m + 4 * d * m**2 - d**2 - m**2
                + 3 * d * m - 1)
    if algorithm == "KFTotal":
        return n * (6 * d**3 + m**3 + 6 * d**2 * m + 4 * d * m**2 + m**2 + 3 * d * m - d
                    + 3 * m + 8)
    if algorithm == "UKFPredict":
        return Fraction(13, 3) * d**3 + 17 * d**2 + 4 * d + 2 + (2 * d + 1) * F
    if algorithm == "UKFUpdate":
        return (third * d**3 + third * m**3 + 6 * d**2 * m + 8 * d * m**2 + 9 * d**2
                + 4 * m**2 + 13 * d * m + 2 * d + 6 * m + 2 + (2 * d + 1) * H)
    if algorithm == "UKFTotal":
        return n * (Fraction(14, 3) * d**3 + m**3 + 6 * d**2 * m + 8 * d * m**2 + 26 * d**2
                    + 6 * m**2 + 13 * d * m + 6 * d + 9 * m + 13 + (2 * d + 1) * (F + H)) + 18
    if algorithm == "DMD":
        return Fraction(7, 3) * m**3 + 4 * m**2 * n - 7 * m**2
    if algorithm == "SparseRegression":
        if m == 0:
            raise ValueError("SparseRegression needs m >= 1")
        return (third * p**3 / m**3 + 4 * p**2 * n / m**2 - 5 * p**2 / m**2 - p * n / m
                + 2 * p * n + p / m - 3 * p)
    if algorithm == "TDMDSolve":
        return Fraction(19, 3) * m**3 - 2 * m**2 * r - 2 * m**2
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {FLOP_ALGORITHMS}")


def write_flops(path, dims_list: Sequence[FlopDims], algorithms=FLOP_ALGORITHMS):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "d", "m", "p", "n", "F", "H", "r", "flops", "flops_float"])
        for dims in dims_list:
            for alg in algorithms:
                try:
                    v = flop_model(alg, dims)
                except ValueError:
                    continue
                w.writerow([alg, dims.d, dims.m, dims.p, dims.n, dims.F, dims.H, dims.r,
                            str(v), repr(float(v))])


# ---------------------------------------------------------------------------
# filter timing
# ---------------------------------------------------------------------------


@dataclass
class ScalingResult:
    rows: list  # (filter, d, n, median seconds)
    fits: dict  # d -> (slope, r2) or None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["filter", "d", "n", "median_seconds", "slope", "r2"])
            for filt, d, n, sec in self.rows:
                fit = self.fits.get((filt, d))
                w.writerow([filt, d, n, repr(sec)] + ([repr(fit[0]), repr(fit[1])]
                                                      if fit else ["", ""]))


def _timing_problem(d, n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = 0.95 * Q
    model = make_model("LinearMatrix", {"d": d, "dt": 1.0})
    theta = np.concatenate([A.ravel(), [1e-2, 1e-2]])
    x = rng.standard_normal(d)
    Y = np.empty((n, d))
    for k in range(n):
        x = A @ x + 0.1 * rng.standard_normal(d)
        Y[k] = x + 0.1 * rng.standard_normal(d)
    return model, theta, ObservationSet(np.arange(n, dtype=float), Y)


def scaling_probe(filter_kind, d_list, n_list, trials=3, seed=0) -> ScalingResult:
    """Median wall time of one likelihood evaluation and the log-log slope in n per d."""
    from .filters import kf_marginal_loglik, ukf_marginal_loglik

    fn = {"KF": kf_marginal_loglik, "UKF": ukf_marginal_loglik}[filter_kind]
    rows, fits = [], {}
    for d in d_list:
        secs = []
        for n in n_list:
            model, theta, data = _timing_problem(d, n, seed)
            fn(model, theta, data)  # compile / warm up
            times = []
            for _ in range(trials):
                t0 = time.perf_counter()
                fn(model, theta, data)
                times.append(time.perf_counter() - t0)
            sec = float(np.median(times))
            secs.append(sec)
            rows.append((filter_kind, int(d), int(n), sec))
        if len(n_list) > 1:
            lr = stats.linregress(np.log(np.asarray(n_list, float)), np.log(secs))
            fits[(filter_kind, int(d))] = (float(lr.slope), float(lr.rvalue**2))
        else:
            fits[(filter_kind, int(d))] = None
    return ScalingResult(rows, fits)


# ---------------------------------------------------------------------------
# recovery problems for the benchmark systems
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    """Data, model and posterior of a benchmark identification problem."""

    truth_spec: TruthSystemSpec
    truth: Trajectory
    data: ObservationSet
    model: StateSpaceModel
    handle: PosteriorHandle
    theta_init: np.ndarray
    theta_true: Optional[np.ndarray] = None


def vdp_problem(n=2000, horizon=20.0, sigma=1e-3, seed=0, laplace_rate=1.0,
                sindy_threshold=0.1) -> Problem:
    """Cubic-dictionary Euler model of the Van der Pol oscillator.

    The dynamics block is initialized by thresholded least squares on the
    data and the variances from the one-step residuals.
    """
    spec = TruthSystemSpec("VanDerPol")
    times = horizon / n * np.arange(n)
    dt = times[1]
    truth = simulate_truth(spec, times)
    data = observe(truth, spec, sigma, seed)
    lib = DictionaryLibrary.polynomial(2, 3)
    model = make_model("EulerDictionary", {"d": 2, "dt": dt, "library": lib,
                                           "proc_cov": {"kind": "diagonal"},
                                           "meas_cov": {"kind": "isotropic"}})
    prior = PriorSpec.for_model(model, dyn=Laplace(laplace_rate))
    handle = PosteriorHandle(model, data, prior, "UKF")
    C = sindy_fit(data, SindyConfig(lib, sindy_threshold, 10, "forward"))
    X = data.values
    r = X[1:] - (X[:-1] + dt * dictionary_eval(lib, X[:-1]) @ C)
    v = np.maximum(np.mean(r * r, axis=0), 1e-12)
    theta_init = np.concatenate([C.T.ravel(), 0.5 * v, [max(0.5 * v.mean(), sigma**2)]])
    true_coef = np.zeros((lib.n_terms, 2))
    labels = lib.labels
    true_coef[labels.index("x2"), 0] = 1.0
    true_coef[labels.index("x1"), 1] = -1.0
    true_coef[labels.index("x2"), 1] = spec.physical_params["mu"]
    true_coef[labels.index("x1^2 x2"), 1] = -spec.physical_params["mu"]
    theta_true = np.concatenate([true_coef.T.ravel(), [np.nan, np.nan, sigma**2]])
    return Problem(spec, truth, data, model, handle, theta_init, theta_true)


def lorenz_problem(n=100, horizon=10.0, sigma=2.0, seed=0, substeps=10,
                   theta_dyn_init=(8.0, 25.0, 2.0)) -> Problem:
    """Known-form Lorenz 63 model with diagonal process and isotropic measurement noise."""
    spec = TruthSystemSpec("Lorenz63")
    times = horizon / n * np.arange(n)
    dt = times[1]
    truth = simulate_truth(spec, times)
    data = observe(truth, spec, sigma, seed)
    model = make_model("KnownODE", {"system": "Lorenz63", "dt": dt, "substeps": substeps,
                                    "proc_cov": {"kind": "diagonal"},
                                    "meas_cov": {"kind": "isotropic"}})
    handle = PosteriorHandle(model, data, PriorSpec.for_model(model), "UKF")
    theta_init = np.concatenate([theta_dyn_init, [1.0, 1.0, 1.0], [sigma**2]])
    theta_true = np.concatenate([spec.dynamics_params(), [np.nan] * 3, [sigma**2]])
    return Problem(spec, truth, data, model, handle, theta_init, theta_true)


def reaction_diffusion_problem(n_points=41, n_obs=30, obs_dt=0.5, sigma=1e-2, seed=0,
                               substeps=50, proc_var=1e-8, ic_var=1e-8,
                               theta_dyn_init=(0.8, 30.0, 0.8), params=None) -> Problem:
    """Known-form reaction-diffusion model observed through the first two moments of C1.

    Process noise is fixed, measurement noise is known, and only the three
    model parameters are inferred.  The filter starts at the (known) initial
    concentration field with covariance ``ic_var I``.
    """
    spec = TruthSystemSpec("ReactionDiffusion1D", dict(params or {}), n_points=n_points)
    times = obs_dt * np.arange(n_obs + 1)
    truth = simulate_truth(spec, times)
    full = observe(truth, spec, sigma, seed)
    data = ObservationSet(full.times[1:], full.values[1:], noise_seed=seed)
    p = spec.physical_params
    model = make_model("KnownODE", {
        "system": "ReactionDiffusion1D", "dt": obs_dt, "substeps": substeps,
        "n_points": n_points, "x_min": spec.x_min, "x_max": spec.x_max, "a": p["a"],
        "b": p["b"], "observation": {"kind": "moments", "n_points": n_points,
                                     "x_min": spec.x_min, "x_max": spec.x_max},
        "proc_cov": {"kind": "fixed", "value": proc_var},
        "meas_cov": {"kind": "fixed", "value": sigma**2}})
    init = GaussianBelief(spec.x0, ic_var * np.eye(spec.state_dim))
    handle = PosteriorHandle(model, data, PriorSpec.for_model(model), "UKF", init=init, t0=0.0)
    return Problem(spec, truth, data, model, handle, np.asarray(theta_dyn_init, float),
                   spec.dynamics_params())


__all__ = [
    "derive_seed", "ls_frequency_cost", "OBJECTIVES", "oscillator_propagator",
    "landscape_model", "LandscapeConfig", "pendulum_data", "objective_landscape",
    "landscape_optimum", "write_landscape", "BayesFit", "fit_bayes", "staged_map", "residual_variance",
    "ALGORITHMS", "SweepSpec", "SweepResult", "sweep_realization", "mse_ratio_sweep",
    "ratio_table", "FLOP_ALGORITHMS", "FlopDims", "flop_model", "write_flops",
    "ScalingResult", "scaling_probe", "Problem", "vdp_problem", "lorenz_problem",
    "reaction_diffusion_problem",
]
