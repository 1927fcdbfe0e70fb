import numpy as np
import pytest
from scipy.stats import norm

from bayesid.mcmc import (STAGE_ONE, STAGE_REJECT, STAGE_TWO, Chain, DramConfig,
                          chain_diagnostics, dram_sample, effective_sample_size)


def _std_normal(th):
    return -0.5 * float(th @ th)


def _tv_to_normal(x, edges):
    hist = np.histogram(x, bins=edges)[0] / x.size
    probs = np.diff(norm.cdf(edges))
    tail = 1.0 - probs.sum()
    return 0.5 * (np.abs(hist - probs).sum() + tail)


def test_standard_normal_moments():
    chain = dram_sample(_std_normal, np.zeros(1), np.eye(1), DramConfig(50_000, seed=1))
    kept, _ = chain.after_burn_in()
    assert abs(kept.mean()) < 0.05
    assert abs(kept.var() - 1.0) < 0.1


def test_constant_posterior_always_accepts_at_stage_one():
    chain = dram_sample(lambda th: 0.0, np.zeros(2), np.eye(2), DramConfig(1000, seed=2))
    rep = chain_diagnostics(chain)
    assert rep.acceptance == 1.0
    assert np.all(chain.stage == STAGE_ONE)


def test_uphill_by_log_two_always_accepts():
    # every proposal is worth exactly log 2 more than the current state
    calls = {"n": 0}

    def target(th):
        calls["n"] += 1
        return np.log(2.0) * (calls["n"] - 1)

    chain = dram_sample(target, np.zeros(1), np.eye(1), DramConfig(300, seed=0))
    assert chain_diagnostics(chain).acceptance == 1.0


def test_rejected_chain():
    x0 = np.array([0.3, -0.2])

    def target(th):
        return 0.0 if np.array_equal(th, x0) else -np.inf

    chain = dram_sample(target, x0, np.eye(2), DramConfig(500, seed=3))
    rep = chain_diagnostics(chain)
    assert rep.acceptance == 0.0
    np.testing.assert_array_equal(rep.ess, [1.0, 1.0])
    assert np.all(chain.samples == x0)
    assert np.all(chain.stage == STAGE_REJECT)
    np.testing.assert_array_equal(rep.quantiles["q2.5"], x0)
    np.testing.assert_array_equal(rep.quantiles["q97.5"], x0)


def test_ess_of_iid_chain():
    rng = np.random.default_rng(4)
    x = rng.normal(size=20_000)
    assert abs(effective_sample_size(x) - x.size) < 0.1 * x.size


def test_ess_of_correlated_chain():
    # AR(1) with coefficient phi has ESS n (1 - phi) / (1 + phi)
    rng = np.random.default_rng(5)
    phi, n = 0.8, 200_000
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    expected = n * (1 - phi) / (1 + phi)
    assert effective_sample_size(x) == pytest.approx(expected, rel=0.1)


def test_chain_invariants():
    target = lambda th: -0.5 * float(th @ th) - 0.1 * th[0] ** 4  # noqa: E731
    chain = dram_sample(target, np.ones(2), 4 * np.eye(2), DramConfig(2000, seed=6))
    for i in range(0, chain.n, 97):
        assert chain.log_post[i] == pytest.approx(target(chain.samples[i]), abs=1e-10)
    prev = np.vstack([chain.theta0[None], chain.samples[:-1]])
    rej = ~chain.accepted
    np.testing.assert_array_equal(chain.samples[rej], prev[rej])
    assert set(np.unique(chain.stage)) <= {STAGE_REJECT, STAGE_ONE, STAGE_TWO}
    np.testing.assert_array_equal(chain.accepted, chain.stage != STAGE_REJECT)


def test_seeded_determinism():
    cfg = DramConfig(1500, seed=7)
    a = dram_sample(_std_normal, np.zeros(3), np.eye(3), cfg)
    b = dram_sample(_std_normal, np.zeros(3), np.eye(3), cfg)
    np.testing.assert_array_equal(a.samples, b.samples)
    c = dram_sample(_std_normal, np.zeros(3), np.eye(3), DramConfig(1500, seed=8))
    assert not np.array_equal(a.samples, c.samples)


def test_histogram_total_variation():
    chain = dram_sample(_std_normal, np.zeros(1), np.eye(1), DramConfig(100_000, seed=9))
    kept, _ = chain.after_burn_in()
    assert _tv_to_normal(kept[:, 0], np.linspace(-4, 4, 41)) < 0.05


@pytest.mark.parametrize("scale", ["cov", "std"])
def test_delayed_rejection_keeps_target(scale):
    # a far too wide stage-one proposal and no adaptation, so stage two does the work
    n = 100_000
    cfg = DramConfig(n, n0=n - 1, gamma=0.01, seed=10, stage2_scale=scale)
    chain = dram_sample(_std_normal, np.zeros(1), np.array([[100.0]]), cfg)
    rep = chain_diagnostics(chain)
    assert np.sum(chain.stage == STAGE_TWO) > 0.3 * n
    assert rep.acceptance_stage2 > 0
    kept, _ = chain.after_burn_in()
    assert _tv_to_normal(kept[:, 0], np.linspace(-4, 4, 41)) < 0.05
    assert abs(kept.mean()) < 0.1 and abs(kept.var() - 1.0) < 0.15


def test_config_validation():
    with pytest.raises(ValueError):
        DramConfig(100, n0=100)
    with pytest.raises(ValueError):
        DramConfig(100, gamma=1.5)
    with pytest.raises(ValueError):
        dram_sample(_std_normal, np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]),
                    DramConfig(300))
    with pytest.raises(ValueError):
        dram_sample(lambda th: -np.inf, np.zeros(1), np.eye(1), DramConfig(300))


def test_chain_csv_roundtrip(tmp_path):
    chain = dram_sample(_std_normal, np.zeros(2), np.eye(2), DramConfig(400, seed=11))
    path = tmp_path / "chain.csv"
    chain.to_csv(path)
    back = Chain.from_csv(path)
    np.testing.assert_array_equal(back.samples, chain.samples)
    np.testing.assert_array_equal(back.log_post, chain.log_post)
    np.testing.assert_array_equal(back.stage, chain.stage)
    assert (tmp_path / "chain.csv.json").exists()


def test_chain_csv_error_names_row(tmp_path):
    chain = dram_sample(_std_normal, np.zeros(1), np.eye(1), DramConfig(300, seed=12))
    path = tmp_path / "chain.csv"
    chain.to_csv(path, sidecar=False)
    lines = path.read_text().splitlines()
    lines[5] = lines[5].replace(",", ",oops", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="row 6"):
        Chain.from_csv(path)


def test_burn_in_bounds():
    chain = dram_sample(_std_normal, np.zeros(1), np.eye(1), DramConfig(300, seed=13))
    with pytest.raises(ValueError):
        chain_diagnostics(chain, burn_in=300)
    assert chain_diagnostics(chain).burn_in == 60
