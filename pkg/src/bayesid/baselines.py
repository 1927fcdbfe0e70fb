"""Least-squares identification baselines: DMD, total-least-squares DMD and SINDy."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .models import DictionaryLibrary, ObservationSet, dictionary_eval


@dataclass
class SnapshotPair:
    """Snapshot matrices; columns of ``Y`` are y_1..y_{n-1}, of ``Yp`` y_2..y_n."""

    Y: np.ndarray
    Yp: np.ndarray

    def __post_init__(self):
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        self.Yp = np.atleast_2d(np.asarray(self.Yp, dtype=float))
        if self.Y.shape != self.Yp.shape:
            raise ValueError("snapshot matrices must have equal shapes")

    @classmethod
    def from_states(cls, X):
        """From an (n, m) array of time-ordered snapshots."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] < 2:
            raise ValueError("need at least two snapshots")
        return cls(X[:-1].T, X[1:].T)

    @classmethod
    def from_observations(cls, obs: ObservationSet):
        _require_uniform_dense(obs)
        return cls.from_states(obs.values)

    @property
    def m(self):
        return self.Y.shape[0]

    @property
    def n_pairs(self):
        return self.Y.shape[1]


def _require_uniform_dense(obs: ObservationSet):
    if not obs.dense:
        raise ValueError("dense data required (observation set has missing entries)")
    if obs.n < 2:
        raise ValueError("need at least two observations")
    dt = np.diff(obs.times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("uniformly spaced observations required")
    return float(dt[0])


def pinv_cutoff(M):
    return max(M.shape) * np.finfo(float).eps


def numerical_rank(M):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > pinv_cutoff(M) * s[0]))


def dmd_fit(pair: SnapshotPair):
    """Least-squares propagator ``A = Yp pinv(Y)`` (minimum-norm solution)."""
    if pair.n_pairs < 1:
        raise ValueError("DMD needs n >= 2 snapshots")
    return pair.Yp @ np.linalg.pinv(pair.Y, rcond=pinv_cutoff(pair.Y))


def tdmd_fit(pair: SnapshotPair, return_rank=False):
    """Total-least-squares propagator from the SVD of ``[Y^T  Yp^T]``.

    With ``V1``/``V2`` the first/last ``m`` rows of the trailing ``2m - r``
    right singular vectors, ``A^T = -V1 V2^T (V2 V2^T)^{-1}``.  The rank ``r``
    is the numerical rank of the stacked matrix capped at ``m``, so at least
    ``m`` trailing vectors are always used.
    """
    m = pair.m
    if pair.n_pairs < 2 * m:
        raise ValueError(f"TLS-DMD needs at least 2m = {2 * m} snapshot pairs")
    Z = np.hstack([pair.Y.T, pair.Yp.T])
    _, _, Vt = np.linalg.svd(Z, full_matrices=True)
    r = min(numerical_rank(Z), m)
    Vtr = Vt[r:].T
    V1, V2 = Vtr[:m], Vtr[m:]
    G = V2 @ V2.T
    if np.linalg.cond(G) > 1.0 / np.finfo(float).eps:
        raise np.linalg.LinAlgError("TLS solution does not exist (V2 V2^T is singular)")
    A = (-V1 @ V2.T @ np.linalg.inv(G)).T
    return (A, r) if return_rank else A


@dataclass
class SindyConfig:
    library: DictionaryLibrary
    threshold: float = 0.1
    max_sweeps: int = 10
    derivative: str = "forward"

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.derivative not in ("forward", "central"):
            raise ValueError("derivative must be 'forward' or 'central'")


def finite_difference(X, dt, kind="forward"):
    """Derivative targets and the states they are paired with."""
    X = np.asarray(X, dtype=float)
    if kind == "forward":
        return (X[1:] - X[:-1]) / dt, X[:-1]
    if X.shape[0] < 3:
        raise ValueError("central differences need at least three points")
    return (X[2:] - X[:-2]) / (2.0 * dt), X[1:-1]


def stlsq(Theta, dX, threshold, max_sweeps, support=None):
    """Sequentially thresholded least squares, column by column."""
    n_terms, d = Theta.shape[1], dX.shape[1]
    active = np.ones((n_terms, d), dtype=bool) if support is None else np.array(support, bool)
    coef = np.zeros((n_terms, d))

    def solve(active):
        out = np.zeros((n_terms, d))
        for j in range(d):
            cols = np.flatnonzero(active[:, j])
            if cols.size == 0:
                continue
            if Theta.shape[0] < cols.size:
                raise ValueError("underdetermined regression: fewer rows than active terms")
            out[cols, j] = np.linalg.lstsq(Theta[:, cols], dX[:, j], rcond=None)[0]
        return out

    coef = solve(active)
    for _ in range(max_sweeps):
        new_active = active & (np.abs(coef) >= threshold)
        if np.array_equal(new_active, active):
            break
        active = new_active
        coef = solve(active)
    return coef


def sindy_fit(obs: ObservationSet, cfg: SindyConfig, support=None):
    """Sparse dictionary regression onto finite-difference derivatives.

    Returns the ``(n_terms, d)`` coefficient matrix in library order.
    ``support`` restricts the initial active set (boolean, same shape).
    """
    dt = _require_uniform_dense(obs)
    dX, X = finite_difference(obs.values, dt, cfg.derivative)
    Theta = dictionary_eval(cfg.library, X)
    return stlsq(Theta, dX, cfg.threshold, cfg.max_sweeps, support)


def sindy_objective(coef, X, dt, lib: DictionaryLibrary, lam):
    """Forward-difference least-squares objective with an L1 penalty.

    ``coef`` may be the ``(n_terms, d)`` matrix or its flattened per-state
    blocks.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    C = np.asarray(coef, dtype=float)
    if C.ndim == 1:
        C = C.reshape(d, lib.n_terms).T
    dX, Xk = finite_difference(X, dt, "forward")
    r = dX - dictionary_eval(lib, Xk) @ C
    return float(np.sum(r * r) + lam * np.sum(np.abs(C)))


def eig_analysis(A, dt):
    """Discrete eigenvalues and their continuous-time counterparts ``log(lambda) / dt``.

    The principal logarithm is used (imaginary part in ``(-pi, pi]``), so an
    eigenvalue of ``-1`` maps to ``i pi / dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    lam = np.linalg.eigvals(np.atleast_2d(A)).astype(complex)
    lam = lam.real + 1j * (lam.imag + 0.0)  # drop signed zeros
    with np.errstate(divide="ignore"):
        cont = np.log(lam) / dt
    order = np.lexsort((lam.imag, lam.real))
    return [(lam[i], cont[i]) for i in order]


def write_coefficients(path, coef, labels, state_names=None):
    d = coef.shape[1]
    state_names = state_names or [f"dx{j + 1}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["term"] + list(state_names))
        for lab, row in zip(labels, coef):
            w.writerow([lab] + [repr(float(v)) for v in row])


def write_eigenvalues(path, eigs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re_discrete", "im_discrete", "re_continuous", "im_continuous"])
        for lam, c in eigs:
            w.writerow([repr(float(lam.real)), repr(float(lam.imag)),
                        repr(float(c.real)), repr(float(c.imag))])


def write_matrix(path, A):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"c{j + 1}" for j in range(A.shape[1])])
        for row in A:
            w.writerow([repr(float(v)) for v in row])


__all__ = ["SnapshotPair", "dmd_fit", "tdmd_fit", "SindyConfig", "sindy_fit", "stlsq",
           "sindy_objective", "finite_difference", "eig_analysis", "numerical_rank",
           "write_coefficients", "write_eigenvalues", "write_matrix"]
