import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from bayesid.baselines import (SindyConfig, SnapshotPair, dmd_fit, eig_analysis,
                               finite_difference, numerical_rank, sindy_fit, sindy_objective,
                               stlsq, tdmd_fit)
from bayesid.models import (DictionaryLibrary, ObservationSet, TruthSystemSpec, dictionary_eval,
                            make_model, pendulum_matrix, simulate_truth, uniform_grid)
from bayesid.filters import noiseless_loglik

from oracles import ref_chain_linear


def _pendulum_states(n=40, dt=0.1):
    spec = TruthSystemSpec("LinearPendulum")
    return simulate_truth(spec, uniform_grid(n, dt)).states


# ---------------------------------------------------------------------------
# DMD
# ---------------------------------------------------------------------------


def test_dmd_noiseless_pendulum_is_matrix_exponential():
    A = dmd_fit(SnapshotPair.from_states(_pendulum_states()))
    np.testing.assert_allclose(A, expm(pendulum_matrix() * 0.1), atol=1e-8)


def test_dmd_identity_data():
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(3, 10))
    np.testing.assert_allclose(dmd_fit(SnapshotPair(Y, Y)), np.eye(3), atol=1e-12)


def test_dmd_single_pair_minimum_norm():
    A = dmd_fit(SnapshotPair(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])))
    np.testing.assert_allclose(A @ [1.0, 0.0], [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(A @ [0.0, 1.0], [0.0, 0.0], atol=1e-15)


def test_dmd_needs_two_snapshots():
    with pytest.raises(ValueError):
        SnapshotPair.from_states(np.ones((1, 2)))
    with pytest.raises(ValueError):
        SnapshotPair.from_observations(ObservationSet(np.array([0.0]), np.ones((1, 2))))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(2, 30), st.integers(0, 1000))
def test_dmd_residual_orthogonality(m, n, seed):
    rng = np.random.default_rng(seed)
    pair = SnapshotPair.from_states(rng.normal(size=(n, m)))
    A = dmd_fit(pair)
    G = (pair.Yp - A @ pair.Y) @ pair.Y.T
    assert np.abs(G).max() <= 1e-8 * max(1.0, np.linalg.norm(pair.Yp))


def test_noiseless_maximizer_is_dmd():
    # zero score of the noiseless likelihood: sum_k (x_k - A x_{k-1}) x_{k-1}^T = 0
    rng = np.random.default_rng(1)
    for _ in range(10):
        d = int(rng.integers(1, 4))
        _, X = ref_chain_linear(rng, d, 30)
        A_normal = (X[1:].T @ X[:-1]) @ np.linalg.inv(X[:-1].T @ X[:-1])
        A_dmd = dmd_fit(SnapshotPair.from_states(X))
        np.testing.assert_allclose(A_dmd, A_normal, atol=1e-6)
        model = make_model("LinearMatrix", {"d": d, "dt": 1.0})
        data = ObservationSet(np.arange(30.0), X)
        best = noiseless_loglik(model, np.concatenate([A_dmd.ravel(), [1.0, 1.0]]), data)
        for _ in range(5):
            pert = A_dmd + 1e-3 * rng.normal(size=(d, d))
            assert noiseless_loglik(model, np.concatenate([pert.ravel(), [1.0, 1.0]]),
                                    data) < best


# ---------------------------------------------------------------------------
# TLS-DMD
# ---------------------------------------------------------------------------


def test_tdmd_equals_dmd_on_noiseless_data():
    X = _pendulum_states()
    pair = SnapshotPair.from_states(X)
    np.testing.assert_allclose(tdmd_fit(pair), dmd_fit(pair), atol=1e-8)
    rng = np.random.default_rng(2)
    A = rng.normal(size=(3, 3))
    A *= 0.97 / np.max(np.abs(np.linalg.eigvals(A)))
    Z = [rng.normal(size=3)]
    for _ in range(20):
        Z.append(A @ Z[-1])
    pair = SnapshotPair.from_states(np.array(Z))
    np.testing.assert_allclose(tdmd_fit(pair), A, atol=1e-8)
    np.testing.assert_allclose(dmd_fit(pair), A, atol=1e-8)


def test_tdmd_scalar_closed_form():
    rng = np.random.default_rng(3)
    y = rng.normal(size=25)
    yp = 0.8 * y + 0.3 * rng.normal(size=25)
    pair = SnapshotPair(y[None, :], yp[None, :])
    syy, spp, syp = y @ y, yp @ yp, y @ yp
    # stationary point of sum (yp - a y)^2 / (1 + a^2)
    a = ((spp - syy) + np.sqrt((spp - syy) ** 2 + 4 * syp**2)) / (2 * syp)
    assert tdmd_fit(pair)[0, 0] == pytest.approx(a, rel=1e-10)


def test_tdmd_reports_rank_and_needs_enough_pairs():
    X = _pendulum_states(10)
    A, r = tdmd_fit(SnapshotPair.from_states(X), return_rank=True)
    assert r == 2
    with pytest.raises(ValueError):
        tdmd_fit(SnapshotPair.from_states(X[:4]))


def test_tls_eigenvalue_bias_smaller_than_ls():
    rng = np.random.default_rng(4)
    theta = 0.3
    A = 0.95 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    ls, tls = [], []
    for _ in range(50):
        X = rng.normal(size=(2, 40))
        pair = SnapshotPair(X + 0.3 * rng.normal(size=X.shape),
                            A @ X + 0.3 * rng.normal(size=X.shape))
        ls.append(np.abs(np.linalg.eigvals(dmd_fit(pair))).mean())
        tls.append(np.abs(np.linalg.eigvals(tdmd_fit(pair))).mean())
    assert abs(np.mean(tls) - 0.95) < abs(np.mean(ls) - 0.95)


# ---------------------------------------------------------------------------
# SINDy
# ---------------------------------------------------------------------------


def _vdp_observations(n=2000, dt=0.01):
    spec = TruthSystemSpec("VanDerPol")
    traj = simulate_truth(spec, uniform_grid(n, dt))
    return ObservationSet(traj.times, traj.states)


def test_sindy_recovers_van_der_pol():
    lib = DictionaryLibrary.polynomial(2, 3)
    coef = sindy_fit(_vdp_observations(), SindyConfig(lib, threshold=0.1))
    idx = {lab: i for i, lab in enumerate(lib.labels)}
    assert set(np.flatnonzero(coef[:, 0])) == {idx["x2"]}
    assert set(np.flatnonzero(coef[:, 1])) == {idx["x1"], idx["x2"], idx["x1^2 x2"]}
    assert coef[idx["x2"], 0] == pytest.approx(1.0, rel=0.05)
    np.testing.assert_allclose(coef[[idx["x1"], idx["x2"], idx["x1^2 x2"]], 1], [-1, 3, -3],
                               rtol=0.05)


def test_sindy_idempotent_on_own_support():
    lib = DictionaryLibrary.polynomial(2, 3)
    obs = _vdp_observations(800)
    cfg = SindyConfig(lib, threshold=0.1)
    coef = sindy_fit(obs, cfg)
    again = sindy_fit(obs, cfg, support=coef != 0)
    np.testing.assert_array_equal(again, coef)


def test_sindy_constant_states_give_zero():
    obs = ObservationSet(uniform_grid(20, 0.1), np.full((20, 2), 0.7))
    coef = sindy_fit(obs, SindyConfig(DictionaryLibrary.polynomial(2, 2), threshold=0.05))
    assert np.all(coef == 0)


def test_sindy_zero_threshold_is_least_squares():
    rng = np.random.default_rng(5)
    lib = DictionaryLibrary.polynomial(2, 2)
    X = rng.normal(size=(30, 2))
    obs = ObservationSet(uniform_grid(30, 0.1), X)
    coef = sindy_fit(obs, SindyConfig(lib, threshold=0.0, max_sweeps=1))
    dX, Xk = finite_difference(X, 0.1)
    ref = np.linalg.lstsq(dictionary_eval(lib, Xk), dX, rcond=None)[0]
    np.testing.assert_allclose(coef, ref, atol=1e-10)


def test_sindy_requires_dense_data():
    vals = np.ones((5, 1))
    vals[2] = np.nan
    obs = ObservationSet(uniform_grid(5, 0.1), vals)
    with pytest.raises(ValueError, match="dense data required"):
        sindy_fit(obs, SindyConfig(DictionaryLibrary.polynomial(1, 2)))


def test_stlsq_underdetermined():
    with pytest.raises(ValueError, match="underdetermined"):
        stlsq(np.ones((2, 4)), np.ones((2, 1)), 0.1, 3)


def test_sindy_objective_minimized_by_least_squares():
    rng = np.random.default_rng(6)
    lib = DictionaryLibrary.polynomial(1, 3)
    X = np.cumsum(0.1 * rng.normal(size=(20, 1)), axis=0)
    dX, Xk = finite_difference(X, 0.05)
    ls = np.linalg.lstsq(dictionary_eval(lib, Xk), dX, rcond=None)[0]
    base = sindy_objective(ls, X, 0.05, lib, 0.0)
    for _ in range(10):
        assert sindy_objective(ls + 1e-3 * rng.normal(size=ls.shape), X, 0.05, lib, 0.0) > base


# ---------------------------------------------------------------------------
# eigenvalues
# ---------------------------------------------------------------------------


def test_eig_identity():
    for lam, c in eig_analysis(np.eye(3), 0.1):
        assert lam == 1.0 and c == 0.0


def test_eig_pendulum_spectrum():
    eigs = eig_analysis(expm(pendulum_matrix() * 0.1), 0.1)
    cont = sorted(c.imag for _, c in eigs)
    np.testing.assert_allclose(cont, [-np.sqrt(9.81), np.sqrt(9.81)], atol=1e-6)
    assert all(abs(c.real) < 1e-6 for _, c in eigs)


def test_eig_negative_one_principal_branch():
    (lam, c), = eig_analysis(np.array([[-1.0]]), 0.5)
    assert c == pytest.approx(1j * np.pi / 0.5)


def test_eig_rejects_bad_dt():
    with pytest.raises(ValueError):
        eig_analysis(np.eye(2), 0.0)


def test_numerical_rank():
    assert numerical_rank(np.outer([1.0, 2.0], [3.0, 4.0, 5.0])) == 1
    assert numerical_rank(np.zeros((2, 2))) == 0
