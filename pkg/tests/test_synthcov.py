import json

import numpy as np
import pytest

from bayesppi.dataio import Dataset
from bayesppi.engine import EngineConfig
from bayesppi.methods import EstimatorSpec
from bayesppi.synthcov import (
    FIG1_WORLD,
    BinaryWorld,
    CategoricalWorld,
    Regime,
    RegimeBiasWorld,
    coverage_run,
    demo_binary_pools,
    fit_worlds_from_pool,
    frequentist_recheck,
    gen_binary,
    gen_categorical,
    gen_regime,
    generate,
    sxs_world,
    two_regime_world,
)

import oracles


# ------------------------------------------------------------------ worlds

@pytest.mark.parametrize("world", [BinaryWorld(0.3, 0.8, 0.1), BinaryWorld(0.9, 0.6, 0.4),
                                   FIG1_WORLD])
def test_binary_marginals(world):
    ds = gen_binary(world, 50_000, 50_000, 1)
    h_rate, a_rate = oracles.binary_marginals(world.p_H, world.p_A_given_H1,
                                              world.p_A_given_H0)
    a = np.concatenate([ds.labeled_f, ds.unlabeled_f])
    assert abs(ds.labeled_y.mean() - h_rate) < 0.01  # labeled half only: 50k items
    assert abs(a.mean() - a_rate) < 0.005
    assert world.p_A == pytest.approx(a_rate)


def test_fig1_world_marginals():
    assert FIG1_WORLD.p_H == 0.733
    assert FIG1_WORLD.p_A == pytest.approx(0.700, abs=1e-3)


def test_from_chain_round_trip():
    w = BinaryWorld(0.4, 0.85, 0.2)
    p_a = w.p_A
    back = BinaryWorld.from_chain(p_a, w.p_H * w.p_A_given_H1 / p_a,
                                  w.p_H * (1 - w.p_A_given_H1) / (1 - p_a))
    assert back.p_H == pytest.approx(w.p_H)
    assert back.p_A_given_H1 == pytest.approx(w.p_A_given_H1)
    assert back.p_A_given_H0 == pytest.approx(w.p_A_given_H0)
    assert BinaryWorld.symmetric(0.5, 0.9).agreement == pytest.approx(0.9)


def test_world_validation():
    with pytest.raises(ValueError):
        BinaryWorld(1.2, 0.5, 0.5)
    with pytest.raises(ValueError):
        RegimeBiasWorld((Regime(0.5, 0, 1, 0), Regime(0.4, 1, 2, 0)))
    with pytest.raises(ValueError):
        CategoricalWorld("ordinal", (1,), (1,))
    with pytest.raises(TypeError):
        generate("not a world", 10, 10, 0)


def test_sxs_world_marginals():
    world = sxs_world((0.35, 0.25, 0.40), 0.85)
    np.testing.assert_allclose(world.p_h, [0.35, 0.25, 0.40])
    assert world.target == pytest.approx(0.10)
    ds = gen_categorical(world, 100_000, 10, 2)
    y = ds.labeled_y
    assert abs(np.mean(y == "w") - 0.35) < 0.005
    assert abs(np.mean(y == "l") - 0.25) < 0.005
    assert np.mean(ds.labeled_f == y) == pytest.approx(0.85, abs=0.005)


def test_abstain_world_marginals():
    world = CategoricalWorld("abstain3", (0.3, 0.5, 0.2), (0.1, 0.9, 0.5))
    assert world.target == pytest.approx(0.3 * 0.1 + 0.5 * 0.9 + 0.2 * 0.5)
    ds = gen_categorical(world, 100_000, 10, 3)
    assert abs(ds.labeled_y.mean() - world.target) < 0.005
    assert abs(np.mean(ds.labeled_f == "u") - 0.2) < 0.005


def test_regime_variance_decomposition():
    world = RegimeBiasWorld((Regime(0.25, 0, 1, -1.0, 0.2), Regime(0.5, 1, 3, 0.5, 0.4),
                             Regime(0.25, 3, 4, 2.0, 0.1)))
    total, within = oracles.regime_variances(world)
    ds = gen_regime(world, 200_000, 10, 4)
    r = ds.labeled_y - ds.labeled_f
    assert np.var(r) == pytest.approx(total, rel=0.02)
    edges = [(0, 1), (1, 3), (3, 4)]
    for (lo, hi), s2 in zip(edges, within):
        mask = (ds.labeled_f >= lo) & (ds.labeled_f < hi)
        assert np.var(r[mask]) == pytest.approx(s2, rel=0.03)
    assert abs(ds.labeled_y.mean() - world.target) < 0.01


def test_two_regime_bias_sign():
    ds = gen_regime(two_regime_world(noise=0.0), 1000, 10, 0)
    r = ds.labeled_y - ds.labeled_f
    assert np.all(r[ds.labeled_f > 2.5] == pytest.approx(1.0))
    assert np.all(r[ds.labeled_f <= 2.5] == pytest.approx(-1.0))


def test_generators_are_seeded():
    for world in (FIG1_WORLD, sxs_world((0.3, 0.3, 0.4), 0.8), two_regime_world()):
        assert generate(world, 30, 40, 9) == generate(world, 30, 40, 9)
        assert not generate(world, 30, 40, 9) == generate(world, 30, 40, 10)


# ------------------------------------------------------------ pooled worlds

def test_fit_worlds_from_pool_sampler():
    pools = demo_binary_pools(seed=0, count=3)
    sampler = fit_worlds_from_pool(pools, n_ref=300, seed=1)
    assert len(sampler.pools) == 3
    worlds = [sampler(np.random.default_rng(s)) for s in range(200)]
    assert all(isinstance(w, BinaryWorld) for w in worlds)
    targets = np.array([w.target for w in worlds])
    pool_rates = [p.labeled_y.mean() for p in pools]
    assert min(pool_rates) - 0.1 < targets.mean() < max(pool_rates) + 0.1


def test_fit_worlds_degenerate_pool():
    pool = Dataset(np.r_[np.ones(250, int), np.zeros(50, int)], np.ones(300, int),
                   np.ones(10, int), "binary")
    sampler = fit_worlds_from_pool(pool, n_ref=300)
    worlds = [sampler(np.random.default_rng(s)) for s in range(100)]
    assert np.mean([w.p_H for w in worlds]) > 0.99


def test_fit_worlds_needs_enough_items():
    with pytest.raises(ValueError):
        fit_worlds_from_pool(gen_binary(FIG1_WORLD, 50, 10, 0), n_ref=300)


def test_fit_worlds_sxs_and_abstain():
    sxs = gen_categorical(sxs_world((0.3, 0.3, 0.4), 0.8), 400, 10, 0)
    w = fit_worlds_from_pool(sxs)(np.random.default_rng(0))
    assert isinstance(w, CategoricalWorld) and w.kind == "sxs3"
    ab = gen_categorical(CategoricalWorld("abstain3", (0.3, 0.5, 0.2), (0.1, 0.9, 0.5)),
                         400, 10, 0)
    w = fit_worlds_from_pool(ab)(np.random.default_rng(0))
    assert w.kind == "abstain3" and 0 < w.target < 1


# ----------------------------------------------------------------- coverage

def test_clopper_pearson_coverage_on_fixed_world():
    spec = EstimatorSpec("classical_proportion_cp")
    report = coverage_run(BinaryWorld(0.2, 0.5, 0.5), spec, 1000, (50, 200), (1, 1), seed=3)
    assert report.trials == 1000
    assert report.coverage >= 0.935


def test_level_half_coverage_is_half():
    spec = EstimatorSpec("classical_mean", engine_cfg=EngineConfig(level=0.5, T=2000))
    report = coverage_run(two_regime_world(), spec, 1000, (200, 200), (1, 1), seed=4)
    assert abs(report.coverage - 0.5) <= 0.05


def test_coverage_determinism(tmp_path):
    spec = EstimatorSpec("chain_rule", engine_cfg=EngineConfig(T=1000))
    a = coverage_run(FIG1_WORLD, spec, 20, seed=7)
    b = coverage_run(FIG1_WORLD, spec, 20, seed=7)
    assert a.rows == b.rows
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    a.to_json(tmp_path / "a.json")
    data = json.loads((tmp_path / "a.json").read_text())
    assert data["trials"] == 20 and len(data["rows"]) == 20


def test_errors_are_counted_separately():
    def flaky(ds, seed):
        if seed % 3 == 0:
            raise ValueError("boom")
        from bayesppi.methods import run
        return run(EstimatorSpec("classical_proportion_cp").with_seed(seed), ds)

    report = coverage_run(FIG1_WORLD, flaky, 60, seed=0)
    assert len(report.errors) > 0
    assert report.trials + len(report.errors) == 60
    assert report.summary()["failed_to_run"] == len(report.errors)


def test_callable_world_sampler_draws_per_trial():
    spec = EstimatorSpec("classical_proportion_cp")
    sampler = lambda rng: BinaryWorld(float(rng.uniform(0.2, 0.8)), 0.9, 0.1)
    report = coverage_run(sampler, spec, 10, seed=1)
    assert len({r["target"] for r in report.rows}) == 10


def test_recheck_groups_and_modes():
    spec = EstimatorSpec("classical_proportion_wald")
    prior = coverage_run(BinaryWorld(0.05, 0.5, 0.5), spec, 200, (20, 40), (1, 1), seed=2)
    assert prior.failures
    fixed = frequentist_recheck(prior, spec, per_theta_trials=1, k_thetas=3, seed=0)
    assert len(fixed.groups) == min(3, len(prior.failures))
    assert all(g["trials"] == 1 for g in fixed.groups)
    resampled = frequentist_recheck(prior, spec, per_theta_trials=25, mode="resample")
    assert resampled.trials == 25
    with pytest.raises(ValueError):
        frequentist_recheck(prior, spec, mode="other")


def test_recheck_needs_failures():
    spec = EstimatorSpec("classical_proportion_cp")
    prior = coverage_run(BinaryWorld(0.5, 0.5, 0.5), spec, 1, (100, 100), (1, 1))
    prior.failures.clear()
    with pytest.raises(ValueError):
        frequentist_recheck(prior, spec)
