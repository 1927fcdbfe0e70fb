"""Compiled (numba) kernels: batched dynamics/observation maps and filter loops.

Every dynamics kernel has the signature ``f(X, theta, aux) -> X_next`` where
``X`` is an ``(N, d)`` batch of states, ``theta`` the dynamics parameter block
and ``aux`` a float64 vector of static configuration.  Observation kernels
share the signature and return ``(N, m)``.

The filter loops mirror the reference implementations in
:mod:`bayesid.filters` line by line; the test-suite checks that they agree.
"""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# small dense linear algebra (no exceptions inside nopython code)
# ---------------------------------------------------------------------------


@njit(cache=True)
def cholesky(A):
    """Lower Cholesky factor; returns ``(L, ok)``."""
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0) or not np.isfinite(s):
            return L, False
        ljj = math.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / ljj
    return L, True


@njit(cache=True)
def forward_sub(L, b):
    n = L.shape[0]
    x = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def back_sub_t(L, b):
    # solves L^T x = b
    n = L.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def chol_solve_mat(L, B):
    """Solve (L L^T) X = B column by column."""
    X = np.empty_like(B)
    for j in range(B.shape[1]):
        X[:, j] = back_sub_t(L, forward_sub(L, B[:, j].copy()))
    return X


@njit(cache=True)
def gauss_logpdf_chol(r, L):
    z = forward_sub(L, r)
    logdet = 0.0
    for i in range(L.shape[0]):
        logdet += math.log(L[i, i])
    return -0.5 * np.dot(z, z) - logdet - 0.5 * r.shape[0] * LOG_2PI


@njit(cache=True)
def symmetrize_nugget(P, eps):
    n = P.shape[0]
    out = np.empty_like(P)
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.5 * (P[i, j] + P[j, i])
        out[i, i] += eps
    return out


@njit(cache=True)
def all_finite(A):
    for v in A.ravel():
        if not np.isfinite(v):
            return False
    return True


# ---------------------------------------------------------------------------
# dynamics and observation kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def linear_map(X, th, aux):
    # th holds a d_out x d matrix row-major; aux[0] = d_out
    N, d = X.shape
    d_out = int(aux[0])
    out = np.zeros((N, d_out))
    for r in range(N):
        for i in range(d_out):
            s = 0.0
            for j in range(d):
                s += th[i * d + j] * X[r, j]
            out[r, i] = s
    return out


@njit(cache=True)
def identity_map(X, th, aux):
    return X.copy()


@njit(cache=True)
def euler_dictionary(X, th, aux):
    # aux = [dt, n_terms, exponents (n_terms * d) ...]; th blocks per state
    N, d = X.shape
    dt = aux[0]
    nt = int(aux[1])
    out = X.copy()
    for r in range(N):
        for j in range(nt):
            f = 1.0
            for i in range(d):
                e = int(aux[2 + j * d + i])
                for _ in range(e):
                    f *= X[r, i]
            for s in range(d):
                out[r, s] += dt * th[s * nt + j] * f
    return out


@njit(cache=True)
def moments_map(X, th, aux):
    # aux = [n_points, trapezoid weights ...]; first n_points entries are C1
    N = X.shape[0]
    npts = int(aux[0])
    out = np.zeros((N, 2))
    for r in range(N):
        s1 = 0.0
        s2 = 0.0
        for j in range(npts):
            w = aux[1 + j]
            c = X[r, j]
            s1 += w * c
            s2 += w * c * c
        out[r, 0] = s1
        out[r, 1] = s2
    return out


@njit(cache=True)
def rhs_linear_pendulum(X, th, aux):
    # th = (g/L,)
    out = np.empty_like(X)
    for r in range(X.shape[0]):
        out[r, 0] = X[r, 1]
        out[r, 1] = -th[0] * X[r, 0]
    return out


@njit(cache=True)
def rhs_nonlinear_pendulum(X, th, aux):
    out = np.empty_like(X)
    for r in range(X.shape[0]):
        out[r, 0] = X[r, 1]
        out[r, 1] = -th[0] * math.sin(X[r, 0])
    return out


@njit(cache=True)
def rhs_van_der_pol(X, th, aux):
    out = np.empty_like(X)
    for r in range(X.shape[0]):
        x1 = X[r, 0]
        x2 = X[r, 1]
        out[r, 0] = x2
        out[r, 1] = th[0] * (1.0 - x1 * x1) * x2 - x1
    return out


@njit(cache=True)
def rhs_lorenz63(X, th, aux):
    out = np.empty_like(X)
    for r in range(X.shape[0]):
        x = X[r, 0]
        y = X[r, 1]
        z = X[r, 2]
        out[r, 0] = th[0] * (y - x)
        out[r, 1] = x * (th[1] - z) - y
        out[r, 2] = x * y - th[2] * z
    return out


@njit(cache=True)
def rhs_reaction_diffusion(X, th, aux):
    # aux[2:] = [n_points, dx, a, b, literal_c2_factor]
    npts = int(aux[2])
    dx2 = aux[3] * aux[3]
    a = aux[4]
    b = aux[5]
    literal = aux[6] != 0.0
    out = np.empty_like(X)
    for r in range(X.shape[0]):
        for j in range(npts):
            # ghost-point Neumann: u_{-1} = u_1, u_{N} = u_{N-2}
            jl = j - 1 if j > 0 else 1
            jr = j + 1 if j < npts - 1 else npts - 2
            c1 = X[r, j]
            c2 = X[r, npts + j]
            lap1 = (X[r, jl] - 2.0 * c1 + X[r, jr]) / dx2
            lap2 = (X[r, npts + jl] - 2.0 * c2 + X[r, npts + jr]) / dx2
            if literal:
                lap2 *= c2
            c1c1c2 = c1 * c1 * c2
            out[r, j] = th[0] * lap1 + a - c1 + th[2] * c1c1c2
            out[r, npts + j] = th[1] * lap2 + b - c1c1c2
    return out


# Integer codes of the maps known to the compiled code.  Dispatching on a
# code (rather than passing functions as arguments) keeps every kernel
# cacheable on disk.
DYN_LINEAR, DYN_EULER, DYN_LIN_PEND, DYN_PEND, DYN_VDP, DYN_LORENZ, DYN_RD = range(7)
OBS_IDENTITY, OBS_MOMENTS, OBS_LINEAR = range(3)


@njit(cache=True)
def rhs_eval(code, X, th, aux):
    if code == DYN_LIN_PEND:
        return rhs_linear_pendulum(X, th, aux)
    if code == DYN_PEND:
        return rhs_nonlinear_pendulum(X, th, aux)
    if code == DYN_VDP:
        return rhs_van_der_pol(X, th, aux)
    if code == DYN_LORENZ:
        return rhs_lorenz63(X, th, aux)
    return rhs_reaction_diffusion(X, th, aux)


@njit(cache=True)
def rk4_steps(code, X, th, aux, h, n):
    for _ in range(n):
        k1 = rhs_eval(code, X, th, aux)
        k2 = rhs_eval(code, X + 0.5 * h * k1, th, aux)
        k3 = rhs_eval(code, X + 0.5 * h * k2, th, aux)
        k4 = rhs_eval(code, X + h * k3, th, aux)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return X


# Discrete propagators: aux[0] = substep length, aux[1] = number of substeps.


@njit(cache=True)
def flow_linear_pendulum(X, th, aux):
    return rk4_steps(DYN_LIN_PEND, X, th, aux, aux[0], int(aux[1]))


@njit(cache=True)
def flow_nonlinear_pendulum(X, th, aux):
    return rk4_steps(DYN_PEND, X, th, aux, aux[0], int(aux[1]))


@njit(cache=True)
def flow_van_der_pol(X, th, aux):
    return rk4_steps(DYN_VDP, X, th, aux, aux[0], int(aux[1]))


@njit(cache=True)
def flow_lorenz63(X, th, aux):
    return rk4_steps(DYN_LORENZ, X, th, aux, aux[0], int(aux[1]))


@njit(cache=True)
def flow_reaction_diffusion(X, th, aux):
    return rk4_steps(DYN_RD, X, th, aux, aux[0], int(aux[1]))


@njit(cache=True)
def apply_dyn(code, X, th, aux):
    if code == DYN_LINEAR:
        return linear_map(X, th, aux)
    if code == DYN_EULER:
        return euler_dictionary(X, th, aux)
    return rk4_steps(code, X, th, aux, aux[0], int(aux[1]))


@njit(cache=True)
def apply_obs(code, X, th, aux):
    if code == OBS_IDENTITY:
        return identity_map(X, th, aux)
    if code == OBS_MOMENTS:
        return moments_map(X, th, aux)
    return linear_map(X, th, aux)


@njit(cache=True)
def integrate_grid(code, x0, th, aux, t_grid, max_step):
    """Fixed-step RK4 on a time grid; returns (states, index of blow-up or -1).

    ``code`` selects the vector field; ``aux`` is passed through to it.
    """
    n = t_grid.shape[0]
    d = x0.shape[0]
    out = np.empty((n, d))
    X = x0.reshape((1, d)).copy()
    out[0] = X[0]
    for k in range(1, n):
        span = t_grid[k] - t_grid[k - 1]
        nsub = int(math.ceil(span / max_step - 1e-9))
        if nsub < 1:
            nsub = 1
        X = rk4_steps(code, X, th, aux, span / nsub, nsub)
        out[k] = X[0]
        if not all_finite(X):
            return out, k
    return out, -1


# ---------------------------------------------------------------------------
# filter loops
# ---------------------------------------------------------------------------


@njit(cache=True)
def kf_loglik(A, H, Q, R, m0, P0, Y, present, steps, eps):
    m = m0.copy()
    P = P0.copy()
    ll = 0.0
    for k in range(Y.shape[0]):
        for _ in range(steps[k]):
            m = A @ m
            P = symmetrize_nugget(A @ P @ A.T + Q, eps)
        if not present[k]:
            continue
        mu = H @ m
        PHt = P @ H.T
        S = symmetrize_nugget(H @ PHt + R, eps)
        L, ok = cholesky(S)
        if not ok:
            return -np.inf
        r = Y[k] - mu
        ll += gauss_logpdf_chol(r, L)
        # m = m + P H^T S^-1 r ; P = P - P H^T S^-1 H P
        K = chol_solve_mat(L, PHt.T).T
        m = m + K @ r
        P = symmetrize_nugget(P - K @ PHt.T, eps)
        if not (np.isfinite(ll) and all_finite(m) and all_finite(P)):
            return -np.inf
    return ll


@njit(cache=True)
def sigma_points(m, L, c):
    d = m.shape[0]
    X = np.empty((2 * d + 1, d))
    X[0] = m
    sc = math.sqrt(c)
    for i in range(d):
        for j in range(d):
            X[1 + i, j] = m[j] + sc * L[j, i]
            X[1 + d + i, j] = m[j] - sc * L[j, i]
    return X


@njit(cache=True)
def weighted_mean(Z, Wm):
    # centred on the first point; identical to sum_i Wm_i Z_i because sum Wm = 1
    mu = Z[0].copy()
    for i in range(1, Z.shape[0]):
        mu += Wm[i] * (Z[i] - Z[0])
    return mu


@njit(cache=True)
def weighted_cross(Za, ma, Zb, mb, Wc):
    C = np.zeros((Za.shape[1], Zb.shape[1]))
    for i in range(Za.shape[0]):
        da = Za[i] - ma
        db = Zb[i] - mb
        C += Wc[i] * np.outer(da, db)
    return C


@njit(cache=True)
def ukf_loglik(dyn, dyn_th, dyn_aux, obs, obs_th, obs_aux, Q, R, m0, P0,
               Y, present, steps, Wm, Wc, c, eps, strict):
    # dyn / obs are integer codes, see apply_dyn / apply_obs
    m = m0.copy()
    P = P0.copy()
    ll = 0.0
    for k in range(Y.shape[0]):
        for _ in range(steps[k]):
            L, ok = cholesky(P)
            if not ok:
                return -np.inf
            Xs = sigma_points(m, L, c)
            Xh = apply_dyn(dyn, Xs, dyn_th, dyn_aux)
            if not all_finite(Xh):
                return -np.inf
            m = weighted_mean(Xh, Wm)
            P = symmetrize_nugget(weighted_cross(Xh, m, Xh, m, Wc) + Q, eps)
        if not present[k]:
            continue
        L, ok = cholesky(P)
        if not ok:
            return -np.inf
        Xs = sigma_points(m, L, c)
        Yh = apply_obs(obs, Xs, obs_th, obs_aux)
        if not all_finite(Yh):
            return -np.inf
        mu = weighted_mean(Yh, Wm)
        S = symmetrize_nugget(weighted_cross(Yh, mu, Yh, mu, Wc) + R, eps)
        C = weighted_cross(Xs, m, Yh, mu, Wc)
        Ls, ok = cholesky(S)
        if not ok:
            return -np.inf
        r = Y[k] - mu
        ll += gauss_logpdf_chol(r, Ls)
        K = chol_solve_mat(Ls, C.T).T
        m = m + K @ r
        if strict:
            KSinv = chol_solve_mat(Ls, K.T).T
            P = symmetrize_nugget(P - KSinv @ K.T, eps)
        else:
            P = symmetrize_nugget(P - K @ C.T, eps)
        if not (np.isfinite(ll) and all_finite(m) and all_finite(P)):
            return -np.inf
    return ll
