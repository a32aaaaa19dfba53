import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wickopt.optimize import (
    GaConfig,
    binary_tournament,
    crowding_distance,
    dominance_matrix,
    hypervolume,
    make_rng,
    nondominated_sort,
    pm_mutation,
    rank_and_crowd,
    run_nsga2,
    sbx_crossover,
    survival,
    zdt1,
    igd,
)
from oracles import brute_fronts, hv_oracle


def test_sort_matches_brute_force_on_1000_populations():
    rng = np.random.default_rng(0)
    for t in range(1000):
        n, m = rng.integers(1, 30), rng.integers(2, 4)
        # coarse values force ties and duplicates
        F = rng.integers(0, 5, (n, m)).astype(float) if t % 2 else rng.random((n, m))
        got = [sorted(f.tolist()) for f in nondominated_sort(F)]
        assert got == brute_fronts(F)


def test_minimization_flag():
    F = np.array([[1.0, 2.0], [2.0, 3.0]])
    assert nondominated_sort(F)[0].tolist() == [1]
    assert nondominated_sort(F, maximize=False)[0].tolist() == [0]
    assert not dominance_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])).any()


def test_crowding_distance_values():
    F = np.array([[0.0, 4.0], [1.0, 3.0], [3.0, 1.0], [4.0, 0.0]])
    d = crowding_distance(F)
    assert np.isinf(d[0]) and np.isinf(d[3])
    assert d[1] == pytest.approx(3 / 4 + 3 / 4)
    assert d[2] == pytest.approx(3 / 4 + 3 / 4)
    assert np.all(np.isinf(crowding_distance(F[:2])))


def test_sbx_mean_preserved():
    rng = make_rng(1)
    lo, hi = np.full(5, -1e6), np.full(5, 1e6)
    for _ in range(10_000):
        p1, p2 = rng.uniform(-5, 5, 5), rng.uniform(-5, 5, 5)
        c1, c2 = sbx_crossover(p1, p2, lo, hi, rng, clip=False)
        assert np.allclose(c1 + c2, p1 + p2, rtol=0, atol=1e-12)


def test_sbx_identical_parents_and_bounds():
    rng = make_rng(2)
    p = np.array([0.2, 0.7, 0.5])
    for _ in range(200):
        c1, c2 = sbx_crossover(p, p, 0.0, 1.0, rng)
        assert np.array_equal(c1, p) and np.array_equal(c2, p)
        c1, c2 = sbx_crossover(rng.random(3), rng.random(3), 0.0, 1.0, rng)
        assert np.all((0 <= c1) & (c1 <= 1) & (0 <= c2) & (c2 <= 1))


def test_sbx_spread_factor_distribution():
    # beta follows the SBX density; its median is exactly 1 for any eta
    rng = make_rng(3)
    p1, p2 = np.zeros(20_000), np.ones(20_000)
    c1, c2 = sbx_crossover(p1, p2, -10, 10, rng, eta=15, prob=1.0, var_prob=1.0, clip=False)
    beta = np.abs(c2 - c1)
    assert np.median(beta) == pytest.approx(1.0, abs=0.01)
    # P(beta <= 1/2) = 0.5 * 0.5**(eta + 1)
    assert np.mean(beta <= 0.5) == pytest.approx(0.5 * 0.5 ** 16, abs=1e-3)


def test_pm_mutation():
    rng = make_rng(4)
    x = np.array([0.1, 0.5, 0.9])
    assert np.array_equal(pm_mutation(x, 0, 1, rng, prob=0.0), x)
    for _ in range(500):
        y = pm_mutation(x, 0, 1, rng, prob=1.0)
        assert np.all((y >= 0) & (y <= 1))
    changed = np.mean([np.any(pm_mutation(x, 0, 1, rng) != x) for _ in range(4000)])
    assert changed == pytest.approx(1 - (2 / 3) ** 3, abs=0.03)
    fixed = pm_mutation(np.array([2.0]), 2.0, 2.0, rng, prob=1.0)
    assert fixed[0] == 2.0


def test_tournament_prefers_rank_then_crowding():
    rank = np.array([1, 2, 1])
    crowd = np.array([0.5, np.inf, 2.0])
    picks = binary_tournament(rank, crowd, 5000, make_rng(5))
    counts = np.bincount(picks, minlength=3) / 5000
    # index 2 beats everyone, index 1 beats nobody except itself
    assert counts[2] > counts[0] > counts[1]
    assert counts[1] == pytest.approx(1 / 9, abs=0.02)


def test_survival_keeps_whole_fronts_then_crowding():
    F = np.array([[3, 0], [0, 3], [2, 2], [1, 1], [0.5, 0.9], [0.9, 0.5]], float)
    keep = survival(F, 4)
    assert set(keep[:3].tolist()) == {0, 1, 2}
    assert keep[3] == 3
    assert len(survival(F, 6)) == 6


@settings(max_examples=60)
@given(arrays(float, st.tuples(st.integers(1, 7), st.sampled_from([2, 3])), elements=st.floats(0, 1)))
def test_hypervolume_matches_inclusion_exclusion(F):
    ref = np.zeros(F.shape[1])
    assert hypervolume(F, ref) == pytest.approx(hv_oracle(F, ref), rel=1e-9, abs=1e-12)


def test_hypervolume_monotone_on_added_points():
    rng = np.random.default_rng(6)
    F = rng.random((10, 3))
    ref = np.zeros(3)
    base = hypervolume(F, ref)
    assert hypervolume(np.vstack([F, rng.random((3, 3))]), ref) >= base
    assert hypervolume(F, np.ones(3)) == 0.0
    with pytest.raises(ValueError):
        hypervolume(np.ones((2, 4)), np.zeros(4))


def neg_zdt1(X):
    return -zdt1(X)


def test_zdt1_short_run_is_deterministic_and_bounded():
    cfg = GaConfig(population=60, offspring=20, generations=30, seed=11)
    a = run_nsga2(neg_zdt1, np.zeros(8), np.ones(8), cfg, hv_reference=np.array([-1.1, -11.0]))
    b = run_nsga2(neg_zdt1, np.zeros(8), np.ones(8), cfg)
    assert np.array_equal(a.X, b.X)
    assert np.all((a.X >= 0) & (a.X <= 1))
    assert a.n_evaluations == 60 + 30 * 20
    assert len(np.unique(a.X, axis=0)) == len(a.X)
    assert np.all(np.diff(a.hv_history) >= -1e-12)  # elitism


def test_zdt1_converges_small():
    cfg = GaConfig(population=100, offspring=100, generations=150, seed=0)
    res = run_nsga2(neg_zdt1, np.zeros(10), np.ones(10), cfg)
    f1 = np.linspace(0, 1, 500)
    ref = np.column_stack([f1, 1 - np.sqrt(f1)])
    assert igd(-res.F[res.front], ref) < 0.02


def test_constant_objective_is_harmless():
    def obj(X):
        return np.column_stack([X[:, 0], 1 - X[:, 0], np.zeros(len(X))])
    res = run_nsga2(obj, [0, 0], [1, 1], GaConfig(40, 20, generations=10, seed=1))
    assert res.front.size == 40
    F = res.F
    rank, _ = rank_and_crowd(F)
    assert np.all(rank == 1)


def test_config_and_bounds_validation():
    with pytest.raises(ValueError):
        GaConfig(population=10, offspring=20)
    with pytest.raises(ValueError):
        GaConfig(offspring=3)
    with pytest.raises(ValueError):
        run_nsga2(neg_zdt1, [0, 1], [1, 0], GaConfig(10, 4, generations=1))
