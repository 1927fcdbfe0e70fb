"""State-space models, truth systems, dictionary libraries and integrators.

A :class:`StateSpaceModel` is the discrete-time hidden Markov model

    X_k = Psi(X_{k-1}, theta_dyn) + xi_k,      xi_k  ~ N(0, Sigma(theta_proc))
    Y_k = h(X_k, theta_obs)       + eta_k,     eta_k ~ N(0, Gamma(theta_meas))

with the parameter vector split into four contiguous blocks.  Dynamics and
observation maps act on batches of states with shape ``(..., d)``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from . import _kernels as K

SYSTEMS = ("LinearPendulum", "NonlinearPendulum", "VanDerPol", "Lorenz63",
           "ReactionDiffusion1D")
FAMILIES = ("LinearMatrix", "EulerDictionary", "KnownODE")


class IntegrationError(FloatingPointError):
    """Raised when a truth simulation produces non-finite states."""

    def __init__(self, t):
        super().__init__(f"integration blew up (non-finite state) at t={t:g}")
        self.t = t


def make_rng(seed):
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Contiguous index ranges of the dynamics/observation/process/measurement blocks."""

    dyn: slice
    obs: slice
    proc: slice
    meas: slice

    @classmethod
    def from_sizes(cls, n_dyn, n_obs=0, n_proc=0, n_meas=0):
        edges = np.cumsum([0, n_dyn, n_obs, n_proc, n_meas])
        return cls(*(slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])))

    @property
    def size(self):
        return self.meas.stop

    @property
    def sizes(self):
        return tuple(s.stop - s.start for s in self.blocks)

    @property
    def blocks(self):
        return (self.dyn, self.obs, self.proc, self.meas)

    def validate(self):
        covered = np.zeros(self.size, dtype=int)
        for s in self.blocks:
            if s.start < 0 or s.stop < s.start:
                raise ValueError(f"invalid block {s}")
            covered[s] += 1
        if not np.all(covered == 1):
            raise ValueError("partition blocks must be disjoint and cover [0, p)")
        return self


class ParameterVector:
    """Parameter values together with their block partition."""

    def __init__(self, values, partition: Partition):
        self.values = np.asarray(values, dtype=float).copy()
        self.partition = partition.validate()
        if self.values.shape != (partition.size,):
            raise ValueError(
                f"expected {partition.size} parameters, got shape {self.values.shape}")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    @property
    def dyn(self):
        return self.values[self.partition.dyn]

    @property
    def obs(self):
        return self.values[self.partition.obs]

    @property
    def proc(self):
        return self.values[self.partition.proc]

    @property
    def meas(self):
        return self.values[self.partition.meas]

    def is_feasible(self):
        """Variance blocks must be non-negative."""
        return bool(np.all(self.proc >= 0) and np.all(self.meas >= 0))

    def __repr__(self):
        return f"ParameterVector({self.values.tolist()}, sizes={self.partition.sizes})"


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


def _check_increasing(times, what):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValueError(f"{what} must be one-dimensional")
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise ValueError(f"{what} must be strictly increasing")
    return times


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, d)

    def __post_init__(self):
        self.times = _check_increasing(self.times, "times")
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] != self.times.size:
            raise ValueError("times and states must have the same length")

    @property
    def d(self):
        return self.states.shape[1]

    def at(self, times, atol=1e-9):
        """States at the given times (which must lie on the trajectory grid)."""
        idx = match_times(self.times, times, atol)
        return self.states[idx]

    def to_csv(self, path):
        header = ["t"] + [f"x{i + 1}" for i in range(self.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, x in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])

    @classmethod
    def from_csv(cls, path):
        rows = _read_csv_rows(path, first="t")
        arr = np.array([[float(v) for v in r] for r in rows[1]])
        return cls(arr[:, 0], arr[:, 1:])


@dataclass
class ObservationSet:
    """Measurements on strictly increasing times; rows with ``present=False`` are missing."""

    times: np.ndarray
    values: np.ndarray  # (n, m), NaN where missing
    present: Optional[np.ndarray] = None
    noise_seed: Optional[int] = None

    def __post_init__(self):
        self.times = _check_increasing(self.times, "times")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.times.size:
            raise ValueError("times and observations must have the same length")
        if self.present is None:
            self.present = np.all(np.isfinite(vals), axis=1)
        self.present = np.asarray(self.present, dtype=bool)
        vals = vals.copy()
        vals[~self.present] = np.nan
        self.values = vals
        if not self.present.any():
            raise ValueError("an ObservationSet needs at least one observation")

    @property
    def n(self):
        return self.times.size

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def dense(self):
        return bool(self.present.all())

    def to_csv(self, path):
        header = ["t"] + [f"y{i + 1}" for i in range(self.m)] + ["present"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, y, p in zip(self.times, self.values, self.present):
                ys = [repr(float(v)) if p else "" for v in y]
                w.writerow([repr(float(t))] + ys + [int(p)])

    @classmethod
    def from_csv(cls, path, noise_seed=None):
        header, rows = _read_csv_rows(path, first="t")
        if header[-1] != "present":
            raise ValueError(f"{path}: last column must be 'present'")
        times, vals, pres = [], [], []
        for i, r in enumerate(rows, start=2):
            try:
                p = bool(int(r[-1]))
                times.append(float(r[0]))
                vals.append([float(v) if p else np.nan for v in r[1:-1]])
                pres.append(p)
            except ValueError as exc:
                raise ValueError(f"{path}: line {i}: {exc}") from None
        return cls(np.array(times), np.array(vals), np.array(pres), noise_seed)


def _read_csv_rows(path, first):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0].strip() != first:
        raise ValueError(f"{path}: expected a header row starting with '{first}'")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ValueError(f"{path}: line {i}: expected {len(header)} fields, got {len(r)}")
    return header, body


def match_times(grid, times, atol=1e-9):
    """Indices of ``times`` within ``grid``; raises if any time is off-grid."""
    grid = np.asarray(grid, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    idx = np.clip(np.searchsorted(grid, times), 0, grid.size - 1)
    lower = np.clip(idx - 1, 0, grid.size - 1)
    idx = np.where(np.abs(grid[lower] - times) < np.abs(grid[idx] - times), lower, idx)
    if np.any(np.abs(grid[idx] - times) > atol):
        raise ValueError("requested times are not on the trajectory grid")
    return idx


# ---------------------------------------------------------------------------
# dictionary libraries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DictionaryLibrary:
    """Monomial library; ``exponents[j]`` holds the multi-index of term ``j``."""

    d_in: int
    exponents: np.ndarray = field(compare=False)

    def __post_init__(self):
        exps = np.asarray(self.exponents, dtype=int).reshape(-1, self.d_in)
        if len({tuple(e) for e in exps}) != len(exps):
            raise ValueError("duplicate terms in dictionary")
        if np.any(exps < 0):
            raise ValueError("exponents must be non-negative")
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def polynomial(cls, d_in, degree, include_constant=True):
        """All monomials up to ``degree`` in graded lexicographic order."""
        terms = []
        for deg in range(0 if include_constant else 1, degree + 1):
            for combo in itertools.combinations_with_replacement(range(d_in), deg):
                e = np.zeros(d_in, dtype=int)
                for i in combo:
                    e[i] += 1
                terms.append(e)
        return cls(d_in, np.array(terms).reshape(-1, d_in))

    @property
    def n_terms(self):
        return self.exponents.shape[0]

    @property
    def labels(self):
        out = []
        for e in self.exponents:
            parts = [f"x{i + 1}" + (f"^{p}" if p > 1 else "") for i, p in enumerate(e) if p]
            out.append(" ".join(parts) if parts else "1")
        return out


def dictionary_eval(lib: DictionaryLibrary, x):
    """Evaluate the library at ``x`` (shape ``(..., d_in)``) -> ``(..., n_terms)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != lib.d_in:
        raise ValueError(f"state has dimension {x.shape[-1]}, library expects {lib.d_in}")
    return np.prod(x[..., None, :] ** lib.exponents, axis=-1)


# ---------------------------------------------------------------------------
# truth systems
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "LinearPendulum": ({"g": 9.81, "L": 1.0}, [0.1, -0.5]),
    "NonlinearPendulum": ({"g": 9.81, "L": 1.0}, [2.5, 0.0]),
    "VanDerPol": ({"mu": 3.0}, [0.0, 2.0]),
    "Lorenz63": ({"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}, [2.0181, 3.5065, 11.8044]),
    "ReactionDiffusion1D": ({"theta1": 1.0, "theta2": 40.0, "theta3": 1.0, "a": 0.1, "b": 0.9,
                             "ic_low": 0.4, "ic_high": 0.6, "ic_seed": 0}, None),
}


@dataclass
class TruthSystemSpec:
    system_id: str
    physical_params: dict = field(default_factory=dict)
    x0: Optional[np.ndarray] = None
    n_points: int = 201
    x_min: float = -40.0
    x_max: float = 40.0
    literal_c2_factor: bool = False

    def __post_init__(self):
        if self.system_id not in SYSTEMS:
            raise ValueError(f"unknown system_id {self.system_id!r}; choose from {SYSTEMS}")
        defaults, x0 = _DEFAULTS[self.system_id]
        unknown = set(self.physical_params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown parameters for {self.system_id}: {sorted(unknown)}")
        self.physical_params = {**defaults, **self.physical_params}
        if self.system_id == "ReactionDiffusion1D":
            if self.n_points < 3 or not self.x_max > self.x_min:
                raise ValueError("reaction-diffusion grid needs >= 3 points and x_max > x_min")
            if self.x0 is None:
                p = self.physical_params
                rng = make_rng(int(p["ic_seed"]))
                self.x0 = rng.uniform(p["ic_low"], p["ic_high"], size=2 * self.n_points)
        elif self.x0 is None:
            self.x0 = np.array(x0, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.state_dim,):
            raise ValueError(f"x0 must have {self.state_dim} entries")

    @property
    def state_dim(self):
        if self.system_id == "ReactionDiffusion1D":
            return 2 * self.n_points
        return {"Lorenz63": 3}.get(self.system_id, 2)

    @property
    def obs_dim(self):
        return 2 if self.system_id == "ReactionDiffusion1D" else self.state_dim

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def space_grid(self):
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def dynamics_params(self):
        """Physical parameters in the order used by the known-form vector fields."""
        p = self.physical_params
        return np.array({
            "LinearPendulum": lambda: [p["g"] / p["L"]],
            "NonlinearPendulum": lambda: [p["g"] / p["L"]],
            "VanDerPol": lambda: [p["mu"]],
            "Lorenz63": lambda: [p["sigma"], p["rho"], p["beta"]],
            "ReactionDiffusion1D": lambda: [p["theta1"], p["theta2"], p["theta3"]],
        }[self.system_id](), dtype=float)

    def to_dict(self):
        out = {"system": self.system_id, "params": dict(self.physical_params),
               "x0": self.x0.tolist()}
        if self.system_id == "ReactionDiffusion1D":
            out["grid"] = {"n_points": self.n_points, "x_min": self.x_min, "x_max": self.x_max}
            out["literal_c2_factor"] = self.literal_c2_factor
        return out


_FLOW_CODE = {
    "LinearPendulum": K.DYN_LIN_PEND,
    "NonlinearPendulum": K.DYN_PEND,
    "VanDerPol": K.DYN_VDP,
    "Lorenz63": K.DYN_LORENZ,
    "ReactionDiffusion1D": K.DYN_RD,
}
_FLOW = {
    "LinearPendulum": K.flow_linear_pendulum,
    "NonlinearPendulum": K.flow_nonlinear_pendulum,
    "VanDerPol": K.flow_van_der_pol,
    "Lorenz63": K.flow_lorenz63,
    "ReactionDiffusion1D": K.flow_reaction_diffusion,
}


def _rd_extras(n_points, dx, a, b, literal):
    return [n_points, dx, a, b, 1.0 if literal else 0.0]


def _ode_aux(spec: TruthSystemSpec, h=0.0, s=1):
    extras = []
    if spec.system_id == "ReactionDiffusion1D":
        p = spec.physical_params
        extras = _rd_extras(spec.n_points, spec.dx, p["a"], p["b"], spec.literal_c2_factor)
    return np.array([h, s] + extras, dtype=float)


def pendulum_matrix(g=9.81, L=1.0):
    return np.array([[0.0, 1.0], [-g / L, 0.0]])


def simulate_truth(spec: TruthSystemSpec, t_grid, max_step=1e-3) -> Trajectory:
    """Noiseless states of a truth system on ``t_grid`` (starting from ``spec.x0``)."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty vector")
    if t_grid.size > 1 and not np.all(np.diff(t_grid) > 0):
        raise ValueError("t_grid must be strictly increasing")
    if spec.system_id == "LinearPendulum":
        A = pendulum_matrix(spec.physical_params["g"], spec.physical_params["L"])
        states = np.empty((t_grid.size, 2))
        states[0] = spec.x0
        cache = {}
        for k in range(1, t_grid.size):
            span = t_grid[k] - t_grid[k - 1]
            key = round(span, 12)
            if key not in cache:
                cache[key] = expm(A * span)
            states[k] = cache[key] @ states[k - 1]
        return Trajectory(t_grid, states)
    states, bad = K.integrate_grid(_FLOW_CODE[spec.system_id], spec.x0.copy(), spec.dynamics_params(),
                                   _ode_aux(spec), t_grid, float(max_step))
    if bad >= 0:
        raise IntegrationError(t_grid[bad])
    return Trajectory(t_grid, states)


def trapezoid_weights(n_points, dx):
    w = np.full(n_points, dx)
    w[0] = w[-1] = dx / 2
    return w


def observe_states(spec: TruthSystemSpec, states):
    """Noiseless observation map of a truth system."""
    states = np.atleast_2d(states)
    if spec.system_id != "ReactionDiffusion1D":
        return states.copy()
    aux = np.concatenate([[spec.n_points], trapezoid_weights(spec.n_points, spec.dx)])
    return K.moments_map(np.ascontiguousarray(states), np.zeros(0), aux)


def observe(traj: Trajectory, spec: TruthSystemSpec, noise_std, seed, keep_every=1) -> ObservationSet:
    """Apply the observation map, add N(0, noise_std^2) noise, keep every ``keep_every``-th time."""
    if traj.times.size == 0:
        raise ValueError("empty trajectory")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    if keep_every < 1:
        raise ValueError("keep_every must be >= 1")
    idx = np.arange(0, traj.times.size, int(keep_every))
    clean = observe_states(spec, traj.states[idx])
    noise = make_rng(seed).standard_normal(clean.shape) * noise_std
    return ObservationSet(traj.times[idx], clean + noise, noise_seed=int(seed))


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kernel:
    """Compiled dynamics/observation pair usable by the fast filter loops."""

    dyn_code: int
    dyn_fn: Callable
    dyn_aux: np.ndarray
    obs_code: int
    obs_fn: Callable
    obs_aux: np.ndarray


@dataclass(frozen=True)
class StateSpaceModel:
    d: int
    m: int
    dt: float
    dynamics: Callable  # (X (..., d), theta_dyn) -> (..., d)
    observation: Callable  # (X (..., d), theta_obs) -> (..., m)
    proc_cov: Callable  # theta_proc -> (d, d)
    meas_cov: Callable  # theta_meas -> (m, m)
    partition: Partition
    family: str = "custom"
    transition_matrix: Optional[Callable] = None  # theta_dyn -> A, for linear dynamics
    observation_matrix: Optional[Callable] = None  # theta_obs -> H, for linear observations
    obs_identity: bool = False
    obs_inverse: Optional[Callable] = None  # (y, theta_obs) -> x
    obs_log_det_jac_inv: Optional[Callable] = None  # (y, theta_obs) -> log|grad h^-1(y)|
    kernel: Optional[Kernel] = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.partition.validate()
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def p(self):
        return self.partition.size

    @property
    def linear(self):
        return self.transition_matrix is not None and self.observation_matrix is not None

    @property
    def invertible_obs(self):
        return self.obs_identity or self.obs_inverse is not None

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise ValueError(f"expected {self.p} parameters, got shape {theta.shape}")
        pt = self.partition
        return theta[pt.dyn], theta[pt.obs], theta[pt.proc], theta[pt.meas]

    def propagate(self, x, theta_dyn, steps=1):
        for _ in range(steps):
            x = self.dynamics(x, theta_dyn)
        return x


def _batched(kernel_fn, aux, d_out):
    def f(x, th):
        x = np.asarray(x, dtype=float)
        flat = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
        out = kernel_fn(flat, np.ascontiguousarray(th, dtype=float), aux)
        return out.reshape(x.shape[:-1] + (d_out,))
    return f


def make_cov(cfg, dim):
    """Covariance parameterization -> (n_params, theta -> matrix).

    ``cfg`` is a mapping with ``kind`` in {"isotropic", "diagonal", "fixed"};
    "fixed" takes ``value`` (scalar variance, vector of variances or full matrix).
    """
    cfg = dict(cfg or {"kind": "isotropic"})
    kind = cfg.get("kind", "isotropic")
    if kind == "isotropic":
        eye = np.eye(dim)
        return 1, lambda th: th[0] * eye
    if kind == "diagonal":
        return dim, lambda th: np.diag(th)
    if kind == "fixed":
        v = np.asarray(cfg["value"], dtype=float)
        if v.ndim == 0:
            mat = float(v) * np.eye(dim)
        elif v.ndim == 1:
            mat = np.diag(v)
        else:
            mat = v
        if mat.shape != (dim, dim):
            raise ValueError(f"fixed covariance must be {dim}x{dim}")
        mat = mat.copy()
        mat.setflags(write=False)
        return 0, lambda th: mat
    raise ValueError(f"unknown covariance kind {kind!r}")


def _observation_parts(cfg, d):
    """Observation map settings: identity, or spatial moments for the reaction-diffusion state."""
    obs_cfg = cfg.get("observation", "identity")
    if isinstance(obs_cfg, str):
        obs_cfg = {"kind": obs_cfg}
    kind = obs_cfg.get("kind", "identity")
    if kind == "identity":
        aux = np.zeros(1)
        return dict(m=d, obs_code=K.OBS_IDENTITY, obs_fn=K.identity_map, obs_aux=aux, identity=True,
                    matrix=lambda th: np.eye(d))
    if kind == "moments":
        npts = int(obs_cfg.get("n_points", d // 2))
        if 2 * npts != d:
            raise ValueError("moment observations need a two-species state of size 2 * n_points")
        dx = (obs_cfg.get("x_max", 40.0) - obs_cfg.get("x_min", -40.0)) / (npts - 1)
        aux = np.concatenate([[npts], trapezoid_weights(npts, dx)])
        return dict(m=2, obs_code=K.OBS_MOMENTS, obs_fn=K.moments_map, obs_aux=aux, identity=False, matrix=None)
    raise ValueError(f"unknown observation kind {kind!r}")


def make_model(family: str, cfg: Mapping) -> StateSpaceModel:
    """Build a :class:`StateSpaceModel` of one of the supported families.

    Parameters
    ----------
    family : {"LinearMatrix", "EulerDictionary", "KnownODE"}
    cfg : mapping
        Common keys: ``dt``, ``proc_cov``, ``meas_cov`` (see :func:`make_cov`),
        ``observation`` ("identity" or a moments mapping).
        LinearMatrix: ``d``.  EulerDictionary: ``d``, ``degree``,
        ``include_constant`` (default True).  KnownODE: ``system`` (a truth
        system name), ``substeps`` (default 1) and for the reaction-diffusion
        PDE ``n_points``, ``x_min``, ``x_max``, ``a``, ``b``,
        ``literal_c2_factor``.

    The parameter vector is ordered [dynamics, observation (empty), process
    covariance, measurement covariance].
    """
    cfg = dict(cfg)
    dt = float(cfg["dt"])
    info = {"family": family}
    if family == "LinearMatrix":
        d = int(cfg["d"])
        n_dyn = d * d
        dyn_code, dyn_fn, dyn_aux = K.DYN_LINEAR, K.linear_map, np.array([d], dtype=float)
        transition = lambda th: np.asarray(th, dtype=float).reshape(d, d)  # noqa: E731
    elif family == "EulerDictionary":
        d = int(cfg["d"])
        lib = cfg.get("library") or DictionaryLibrary.polynomial(
            d, int(cfg.get("degree", 3)), bool(cfg.get("include_constant", True)))
        if lib.d_in != d:
            raise ValueError("library input dimension does not match d")
        n_dyn = d * lib.n_terms
        dyn_code, dyn_fn = K.DYN_EULER, K.euler_dictionary
        dyn_aux = np.concatenate([[dt, lib.n_terms], lib.exponents.ravel()]).astype(float)
        transition = None
        info["library"] = lib
    elif family == "KnownODE":
        system = cfg["system"]
        if system not in SYSTEMS:
            raise ValueError(f"unknown system {system!r}")
        s = int(cfg.get("substeps", 1))
        if s < 1:
            raise ValueError("substeps must be >= 1")
        extras = []
        if system == "ReactionDiffusion1D":
            npts = int(cfg.get("n_points", 201))
            dx = (cfg.get("x_max", 40.0) - cfg.get("x_min", -40.0)) / (npts - 1)
            extras = _rd_extras(npts, dx, cfg.get("a", 0.1), cfg.get("b", 0.9),
                                cfg.get("literal_c2_factor", False))
            d = 2 * npts
        else:
            d = 3 if system == "Lorenz63" else 2
        n_dyn = {"Lorenz63": 3, "ReactionDiffusion1D": 3}.get(system, 1)
        dyn_code, dyn_fn = _FLOW_CODE[system], _FLOW[system]
        dyn_aux = np.array([dt / s, s] + extras, dtype=float)
        transition = None
        info.update(system=system, substeps=s)
    else:
        raise ValueError(f"unknown model family {family!r}; choose from {FAMILIES}")

    obs = _observation_parts(cfg, d)
    n_proc, proc_cov = make_cov(cfg.get("proc_cov"), d)
    n_meas, meas_cov = make_cov(cfg.get("meas_cov"), obs["m"])
    partition = Partition.from_sizes(n_dyn, 0, n_proc, n_meas)
    kernel = Kernel(dyn_code, dyn_fn, dyn_aux, obs["obs_code"], obs["obs_fn"], obs["obs_aux"])
    return StateSpaceModel(
        d=d, m=obs["m"], dt=dt,
        dynamics=_batched(dyn_fn, dyn_aux, d),
        observation=_batched(obs["obs_fn"], obs["obs_aux"], obs["m"]),
        proc_cov=proc_cov, meas_cov=meas_cov, partition=partition, family=family,
        transition_matrix=transition,
        observation_matrix=obs["matrix"] if transition is not None else None,
        obs_identity=obs["identity"], kernel=kernel, info=info,
    )


def euler_coefficients(theta_dyn, lib: DictionaryLibrary, d):
    """Reshape a flat EulerDictionary parameter block into an (n_terms, d) matrix."""
    return np.asarray(theta_dyn, dtype=float).reshape(d, lib.n_terms).T


def uniform_grid(n, dt, t0=0.0):
    return t0 + dt * np.arange(n)


def rk4_flow(system: str, x, theta, h, n_steps, extras: Sequence[float] = ()):
    """Advance a batch of states with ``n_steps`` RK4 steps of a known vector field."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    aux = np.array([h, n_steps] + list(extras), dtype=float)
    return _FLOW[system](np.ascontiguousarray(x), np.asarray(theta, dtype=float), aux)


def pendulum_energy(states, g=9.81, L=1.0):
    states = np.atleast_2d(states)
    return 0.5 * states[:, 1] ** 2 - (g / L) * np.cos(states[:, 0])


__all__ = [
    "SYSTEMS", "FAMILIES", "IntegrationError", "Partition", "ParameterVector", "Trajectory",
    "ObservationSet", "DictionaryLibrary", "dictionary_eval", "TruthSystemSpec",
    "simulate_truth", "observe", "observe_states", "StateSpaceModel", "Kernel", "make_model",
    "make_cov", "make_rng", "euler_coefficients", "uniform_grid", "rk4_flow", "pendulum_matrix",
    "pendulum_energy", "trapezoid_weights", "match_times",
]
