import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from bayesid.models import (DictionaryLibrary, IntegrationError, ObservationSet, ParameterVector,
                            Partition, Trajectory, TruthSystemSpec, dictionary_eval, make_model,
                            observe, pendulum_energy, pendulum_matrix, simulate_truth)


# ---------------------------------------------------------------------------
# parameter vectors
# ---------------------------------------------------------------------------


def test_partition_covers_range():
    part = Partition.from_sizes(4, 0, 1, 1)
    assert part.size == 6
    idx = np.concatenate([np.arange(6)[b] for b in part.blocks])
    assert sorted(idx.tolist()) == list(range(6))


def test_parameter_vector_feasibility():
    part = Partition.from_sizes(2, 0, 1, 1)
    assert ParameterVector([1, -2, 0.1, 0.0], part).is_feasible()
    assert not ParameterVector([1, -2, -0.1, 0.2], part).is_feasible()
    with pytest.raises(ValueError):
        ParameterVector([1, 2, 3], part)


# ---------------------------------------------------------------------------
# trajectories and observation files
# ---------------------------------------------------------------------------


def test_trajectory_rejects_unsorted_times():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.2, 0.1]), np.zeros((3, 2)))


def test_observation_csv_roundtrip(tmp_path):
    vals = np.array([[1.0, 2.0], [np.nan, np.nan], [0.5, -1.25]])
    obs = ObservationSet(np.array([0.0, 0.1, 0.2]), vals)
    obs.to_csv(tmp_path / "o.csv")
    back = ObservationSet.from_csv(tmp_path / "o.csv")
    np.testing.assert_array_equal(back.present, [True, False, True])
    np.testing.assert_array_equal(back.values[back.present], vals[obs.present])
    assert not back.dense


def test_observation_csv_error_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,y1,present\n0.0,1.0,1\n0.1,abc,1\n")
    with pytest.raises(ValueError, match="line 3"):
        ObservationSet.from_csv(p)


def test_observation_set_needs_one_present():
    with pytest.raises(ValueError):
        ObservationSet(np.array([0.0, 1.0]), np.full((2, 1), np.nan))


# ---------------------------------------------------------------------------
# dictionary library
# ---------------------------------------------------------------------------


def test_cubic_library_order():
    lib = DictionaryLibrary.polynomial(2, 3)
    assert lib.n_terms == 10
    assert lib.labels == ["1", "x1", "x2", "x1^2", "x1 x2", "x2^2", "x1^3", "x1^2 x2",
                          "x1 x2^2", "x2^3"]


def test_dictionary_eval_values():
    lib = DictionaryLibrary.polynomial(2, 3)
    f0 = dictionary_eval(lib, np.array([0.0, 0.0]))
    np.testing.assert_array_equal(f0, np.eye(10)[0])
    f = dictionary_eval(lib, np.array([2.0, 3.0]))
    assert f[lib.labels.index("x1^2 x2")] == 12.0


def test_dictionary_eval_dimension_mismatch():
    with pytest.raises(ValueError):
        dictionary_eval(DictionaryLibrary.polynomial(2, 2), np.ones(3))


def test_library_rejects_duplicates():
    with pytest.raises(ValueError):
        DictionaryLibrary(2, np.array([[1, 0], [1, 0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 4), st.booleans())
def test_dictionary_length_matches_terms(d, degree, const):
    if degree == 0 and not const:
        return
    lib = DictionaryLibrary.polynomial(d, degree, const)
    x = np.linspace(-1, 1, d)
    assert dictionary_eval(lib, x).shape == (lib.n_terms,)


# ---------------------------------------------------------------------------
# truth simulation
# ---------------------------------------------------------------------------


def test_linear_pendulum_one_step():
    spec = TruthSystemSpec("LinearPendulum")
    traj = simulate_truth(spec, np.array([0.0, 0.1]))
    A = np.array([[0.0, 1.0], [-9.81, 0.0]])
    np.testing.assert_allclose(traj.states[1], expm(A * 0.1) @ np.array([0.1, -0.5]),
                               rtol=1e-13)


def test_linear_pendulum_semigroup():
    spec = TruthSystemSpec("LinearPendulum")
    traj = simulate_truth(spec, 0.1 * np.arange(51))
    M = expm(pendulum_matrix() * 0.1)
    x = spec.x0.copy()
    for k in range(50):
        x = M @ x
    np.testing.assert_allclose(traj.states[-1], x, rtol=1e-12)


@pytest.mark.parametrize("system", ["LinearPendulum", "NonlinearPendulum", "VanDerPol",
                                    "Lorenz63", "ReactionDiffusion1D"])
def test_zero_time_grid_returns_x0(system):
    spec = TruthSystemSpec(system, n_points=11) if system == "ReactionDiffusion1D" \
        else TruthSystemSpec(system)
    traj = simulate_truth(spec, np.array([0.0]))
    np.testing.assert_array_equal(traj.states[0], spec.x0)


def test_lorenz_matches_adaptive_integrator():
    spec = TruthSystemSpec("Lorenz63")
    traj = simulate_truth(spec, np.array([0.0, 2.0]))
    s, r, b = 10.0, 28.0, 8.0 / 3.0

    def f(t, x):
        return [s * (x[1] - x[0]), x[0] * (r - x[2]) - x[1], x[0] * x[1] - b * x[2]]

    ref = solve_ivp(f, (0, 2), spec.x0, method="DOP853", rtol=1e-12, atol=1e-12).y[:, -1]
    np.testing.assert_allclose(traj.states[-1], ref, rtol=1e-4)


def test_nonlinear_pendulum_energy_drift():
    spec = TruthSystemSpec("NonlinearPendulum")
    traj = simulate_truth(spec, np.linspace(0, 10, 101))
    E = pendulum_energy(traj.states)
    assert np.max(np.abs(E - E[0])) / abs(E[0]) < 1e-6


def test_simulate_rejects_bad_grid():
    with pytest.raises(ValueError):
        simulate_truth(TruthSystemSpec("VanDerPol"), np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        TruthSystemSpec("Duffing")


def test_blow_up_reports_time():
    spec = TruthSystemSpec("VanDerPol", {"mu": 3.0}, np.array([1e200, 1e200]))
    with pytest.raises(IntegrationError):
        simulate_truth(spec, np.array([0.0, 1.0]))


def test_rd_constant_state_without_reaction_is_steady():
    # a = b = 0 with C1 = 0 removes every reaction term
    spec = TruthSystemSpec("ReactionDiffusion1D", {"a": 0.0, "b": 0.0}, n_points=21,
                           x0=np.concatenate([np.zeros(21), np.full(21, 0.7)]))
    traj = simulate_truth(spec, np.array([0.0, 2.0]))
    np.testing.assert_allclose(traj.states[-1], traj.states[0], atol=1e-14)


# ---------------------------------------------------------------------------
# observation
# ---------------------------------------------------------------------------


def test_noiseless_identity_observation():
    spec = TruthSystemSpec("VanDerPol")
    traj = simulate_truth(spec, np.linspace(0, 1, 11))
    obs = observe(traj, spec, 0.0, seed=1)
    np.testing.assert_array_equal(obs.values, traj.states)


def test_moments_of_constant_field():
    n = 201
    spec = TruthSystemSpec("ReactionDiffusion1D", x0=np.full(2 * n, 0.5))
    obs = observe(Trajectory(np.array([0.0]), spec.x0[None, :]), spec, 0.0, seed=0)
    np.testing.assert_allclose(obs.values[0], [40.0, 20.0], rtol=1e-13)


def test_noise_statistics():
    spec = TruthSystemSpec("LinearPendulum")
    traj = simulate_truth(spec, 0.01 * np.arange(5000))
    obs = observe(traj, spec, 0.1, seed=3)
    v = np.var(obs.values - traj.states)
    assert abs(v - 0.01) < 0.05 * 0.01


def test_keep_every():
    spec = TruthSystemSpec("LinearPendulum")
    traj = simulate_truth(spec, 0.1 * np.arange(10))
    obs = observe(traj, spec, 0.0, seed=0, keep_every=3)
    np.testing.assert_allclose(obs.times, traj.times[::3])


# ---------------------------------------------------------------------------
# model families
# ---------------------------------------------------------------------------


def test_linear_matrix_row_major():
    model = make_model("LinearMatrix", {"d": 2, "dt": 0.1})
    out = model.dynamics(np.array([[1.0, 0.0]]), np.array([0.0, 1.0, -9.81, 0.0]))
    np.testing.assert_array_equal(out[0], [0.0, -9.81])


def test_euler_dictionary_zero_is_identity():
    model = make_model("EulerDictionary", {"d": 2, "dt": 0.1, "degree": 3})
    x = np.random.default_rng(0).normal(size=(5, 2))
    np.testing.assert_array_equal(model.dynamics(x, np.zeros(20)), x)


def test_euler_dictionary_matches_formula():
    lib = DictionaryLibrary.polynomial(2, 2)
    model = make_model("EulerDictionary", {"d": 2, "dt": 0.05, "library": lib})
    th = np.random.default_rng(1).normal(size=2 * lib.n_terms)
    x = np.array([0.3, -0.7])
    C = th.reshape(2, lib.n_terms).T
    np.testing.assert_allclose(model.dynamics(x[None], th)[0],
                               x + 0.05 * dictionary_eval(lib, x) @ C, rtol=1e-14)


def test_known_ode_lorenz_matches_truth():
    model = make_model("KnownODE", {"system": "Lorenz63", "dt": 0.1, "substeps": 10})
    spec = TruthSystemSpec("Lorenz63")
    # ten substeps of 0.01 vs the truth integrator at 1e-3
    ref = simulate_truth(spec, np.array([0.0, 0.1])).states[1]
    out = model.dynamics(spec.x0[None], spec.dynamics_params())[0]
    np.testing.assert_allclose(out, ref, rtol=1e-6)


def test_model_partition_and_covariances():
    model = make_model("LinearMatrix", {"d": 2, "dt": 0.1, "proc_cov": {"kind": "diagonal"}})
    assert model.partition.sizes == (4, 0, 2, 1)
    dyn, obs, proc, meas = model.split(np.arange(7.0))
    np.testing.assert_array_equal(model.proc_cov(proc), np.diag([4.0, 5.0]))
    np.testing.assert_array_equal(model.meas_cov(meas), 6.0 * np.eye(2))


def test_model_rejects_unknown_family():
    with pytest.raises(ValueError):
        make_model("NeuralNet", {"dt": 0.1})
