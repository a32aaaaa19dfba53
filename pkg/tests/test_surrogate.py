import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wickopt.surrogate import (
    CholeskyError,
    GpData,
    LmgpModel,
    LmgpSpec,
    _Objective,
    _cholesky,
    correlation,
    cross_validate,
    fit,
    gauge_fix,
    mae,
    negative_log_likelihood,
    nrmse,
)
from oracles import multi_fidelity

EXACT = LmgpSpec(n_starts=3, nugget_bounds=(-12.0, -12.0))


def rotation(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


# -- kernel ------------------------------------------------------------------

def test_kernel_identity_and_latent_distance():
    x = np.array([[0.3, 0.7]])
    z = np.array([[0.0, 0.0], [0.6, 0.0], [0.2, 1.1]])
    c0, c2 = np.array([[0]]), np.array([[2]])
    assert correlation(x, c0, x, c0, np.zeros(2), [z])[0, 0] == 1.0
    d2 = 0.2 ** 2 + 1.1 ** 2
    assert correlation(x, c0, x, c2, np.zeros(2), [z])[0, 0] == pytest.approx(math.exp(-d2), rel=1e-14)


def test_kernel_quantitative_part():
    a, b = np.array([[0.1, 0.5]]), np.array([[0.4, 0.2]])
    om = np.array([0.5, -1.0])
    c = np.zeros((1, 0), np.int64)
    expect = math.exp(-(10 ** 0.5 * 0.09 + 10 ** -1.0 * 0.09))
    assert correlation(a, c, b, c, om, [])[0, 0] == pytest.approx(expect, rel=1e-14)


@settings(max_examples=30)
@given(st.floats(-math.pi, math.pi), st.floats(-3, 3), st.floats(-3, 3), st.booleans())
def test_kernel_rigid_motion_invariant(t, dx, dy, reflect):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(3, 2))
    Q = rotation(t) @ (np.diag([1, -1]) if reflect else np.eye(2))
    z2 = z @ Q.T + np.array([dx, dy])
    x = rng.random((6, 2))
    c = rng.integers(0, 3, (6, 1))
    a = correlation(x, c, x, c, np.zeros(2), [z])
    b = correlation(x, c, x, c, np.zeros(2), [z2])
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_gauge_fix():
    z = np.array([[1.0, 2.0], [2.0, 3.0], [0.0, 5.0]])
    g = gauge_fix(z)
    assert np.allclose(g[0], 0) and abs(g[1, 1]) < 1e-15 and g[1, 0] > 0
    d = lambda a: np.linalg.norm(a[:, None] - a[None], axis=2)
    assert np.allclose(d(g), d(z))


# -- metrics -----------------------------------------------------------------

def test_nrmse_hand_arithmetic():
    assert nrmse([2, 3, 4], [1, 2, 3]) == pytest.approx(1.0, rel=1e-15)
    assert nrmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert mae([2, 3, 4], [1, 2, 3]) == 1.0


# -- fitting and prediction ------------------------------------------------

@pytest.fixture(scope="module")
def exact_model():
    rng = np.random.default_rng(1)
    x = rng.random((25, 2))
    data = GpData(x, np.zeros((25, 0)), np.sin(6 * x[:, 0]) * np.cos(4 * x[:, 1]))
    return fit(data, EXACT)


def test_interpolates_training_data(exact_model):
    d = exact_model.data
    pred = exact_model.predict(d.x)
    assert np.max(np.abs(pred.mean - d.y)) <= 1e-6 * d.y.std()
    assert np.all(pred.variance <= 1e-6 * d.y.var())
    assert np.all(pred.variance >= 0)


def test_far_field_variance_reaches_prior(exact_model):
    pred = exact_model.predict(np.array([[60.0, -60.0]]))
    assert pred.variance[0] == pytest.approx(exact_model.process_variance, rel=0.05)
    assert pred.extrapolated[0]
    assert not exact_model.predict(exact_model.data.x[:3]).extrapolated.any()


def test_likelihood_not_worse_than_any_start(exact_model):
    assert all(exact_model.nll <= t["initial_nll"] + 1e-12 for t in exact_model.trace)
    assert negative_log_likelihood(exact_model) == pytest.approx(exact_model.nll, rel=1e-9, abs=1e-9)


def test_gradient_matches_finite_differences():
    data = multi_fidelity(0, (5, 6, 7))
    xs = (data.x - data.x.min(0)) / np.ptp(data.x, axis=0)
    ys = (data.y - data.y.mean()) / data.y.std()
    obj = _Objective(data, xs, ys)
    p = np.random.default_rng(2).uniform(-1, 1, obj.size)
    p[-3:] = -3.0
    f, g = obj(p)
    h = 1e-6
    num = np.array([(obj(p + h * e, False) - obj(p - h * e, False)) / (2 * h) for e in np.eye(p.size)])
    assert np.allclose(g, num, rtol=1e-5, atol=1e-6)


@pytest.fixture(scope="module")
def fused():
    return fit(multi_fidelity(0), LmgpSpec(n_starts=4, seed=0))


def test_latent_gauge_invariance_of_predictions(fused):
    rng = np.random.default_rng(3)
    x = rng.random((10, 2))
    c = rng.integers(0, 3, (10, 1))
    base = fused.predict(x, c)
    z = fused.latents[0]
    moved = fused.with_latents([z @ rotation(1.1).T @ np.diag([1, -1]) + np.array([4.0, -2.0])])
    other = moved.predict(x, c)
    assert np.allclose(other.mean, base.mean, rtol=1e-10, atol=1e-10 * np.abs(base.mean).max())
    assert np.allclose(other.variance, base.variance, rtol=1e-10, atol=1e-12)


def test_shuffle_invariance(fused):
    perm = np.random.default_rng(4).permutation(fused.data.n)
    shuffled = fused.with_data(fused.data.subset(perm))
    x = np.random.default_rng(5).random((8, 2))
    c = np.zeros((8, 1), np.int64)
    a, b = fused.predict(x, c).mean, shuffled.predict(x, c).mean
    assert np.abs(a - b).max() < 1e-10 * np.abs(a).max()


def test_serialization_round_trip(fused):
    again = LmgpModel.from_json(fused.to_json())
    x = np.random.default_rng(6).random((5, 2))
    c = np.array([[0], [1], [2], [0], [1]])
    assert np.array_equal(again.predict(x, c).mean, fused.predict(x, c).mean)
    assert "group,level,z1,z2" in fused.latent_csv()
    bad = fused.to_json().replace('"y": [', '"y": [9.0, ', 1)
    with pytest.raises(ValueError):
        LmgpModel.from_json(bad)


def test_fidelity_ordering_in_latent_space():
    hits = 0
    for seed in range(10):
        z = fit(multi_fidelity(seed), LmgpSpec(n_starts=4, seed=seed)).latents[0]
        hits += np.linalg.norm(z[1] - z[0]) < np.linalg.norm(z[2] - z[0])
    assert hits >= 8


def test_independent_levels_are_far_apart():
    rng = np.random.default_rng(7)
    x = rng.random((60, 1))
    lvl = np.arange(60) % 3
    funcs = (lambda t: np.sin(6 * t), lambda t: np.cos(5 * t + 1.0), lambda t: (t - 0.5) ** 2 * 8 - 1)
    y = np.array([funcs[k](t) for k, t in zip(lvl, x[:, 0])])
    model = fit(GpData(x, lvl[:, None], y, (3,)), LmgpSpec(n_starts=6, seed=1))
    z = model.latents[0]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        assert np.linalg.norm(z[i] - z[j]) >= 1.0


def test_constant_output_flags_zero_signal():
    x = np.random.default_rng(0).random((6, 2))
    m = fit(GpData(x, np.zeros((6, 0)), np.full(6, 3.0)))
    assert m.zero_signal
    assert np.all(m.predict(x).mean == 3.0)


def test_input_validation():
    with pytest.raises(ValueError):
        GpData(np.zeros((3, 1)), np.zeros((3, 0)), np.zeros(4))
    with pytest.raises(ValueError):
        GpData(np.zeros((2, 1)), np.zeros((2, 0)), np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        GpData(np.zeros((2, 1)), np.array([[0], [3]]), np.zeros(2), (2,))
    with pytest.raises(ValueError):
        fit(GpData(np.random.random((5, 1)), np.array([[0], [0], [0], [0], [1]]), np.arange(5.0)))
    m = fit(multi_fidelity(1, (4, 4, 4)), LmgpSpec(n_starts=1))
    with pytest.raises(ValueError):
        m.predict(np.zeros((1, 2)))


def test_cholesky_ladder():
    K = np.ones((3, 3))  # rank one, rescued by jitter
    _, jitter = _cholesky(K)
    assert jitter > 0
    with pytest.raises(CholeskyError):
        _cholesky(-np.eye(2))


def test_cross_validation_is_seeded_and_stratified():
    data = multi_fidelity(2, (10, 10, 10))
    a = cross_validate(data, folds=5, spec=LmgpSpec(n_starts=2), seed=3)
    b = cross_validate(data, folds=5, spec=LmgpSpec(n_starts=2), seed=3)
    assert np.array_equal(a.predictions, b.predictions)
    assert a.nrmse == pytest.approx(nrmse(a.predictions, data.y))
    assert a.nrmse < 0.5
    with pytest.raises(ValueError):
        cross_validate(data.subset(np.arange(3)), folds=5)
