import math

import numpy as np
import pytest

from wickopt import lbm
from wickopt.grid import unit_cell
from wickopt.lbm import _fallback
from wickopt.lbm.solver import (
    LbmConfig,
    LbmDivergenceError,
    capillary_pressure,
    equilibrium,
    permeability_axis,
    permeability_tensor,
    population_array,
    run_axis,
)
from wickopt.lbm import Fluid
from wickopt.recon import Microstructure, realize
from wickopt.sdfgen import SdfParams, SdfType
from oracles import duct_oracle, rect_duct_oracle

FAST = LbmConfig(window=1000, rel_tol=1e-5, k_tol_um2=0.0, check_every=100, max_iters=60_000)

compiled = pytest.mark.skipif(lbm.BACKEND != "cython", reason="compiled kernel not built")


def test_duct_oracle_value():
    assert duct_oracle() == pytest.approx(0.035144, abs=5e-7)


def state(shape, seed=0, porosity=0.7):
    rng = np.random.default_rng(seed)
    solid = (rng.random(shape) > porosity).astype(np.uint8)
    rho = 1.0 + 1e-3 * rng.standard_normal(shape)
    u = 1e-3 * rng.standard_normal((3,) + shape)
    f = population_array(shape)
    f[...] = equilibrium(rho, u) * (1 + 1e-2 * rng.standard_normal((19,) + shape))
    f[:, solid.astype(bool)] = 0
    return solid, f


@compiled
@pytest.mark.parametrize("shape", [(5, 6, 7), (9, 8, 12), (16, 16, 16)])
def test_kernel_matches_fallback(shape):
    from wickopt.lbm._kernel import step as cstep

    solid, f = state(shape, seed=sum(shape))
    fa, ga = population_array(shape), population_array(shape)
    fb, gb = population_array(shape), population_array(shape)
    fa[...] = f
    fb[...] = f
    for _ in range(5):
        ja, ua = cstep(fa, ga, solid, 0.8, 1.001, 0.999)
        jb, ub = _fallback.step(fb, gb, solid, 0.8, 1.001, 0.999)
        fa, ga, fb, gb = ga, fa, gb, fb
        assert ja == pytest.approx(jb, rel=1e-12, abs=1e-14)
        assert ua == pytest.approx(ub, rel=1e-12, abs=1e-16)
    assert np.abs(fa - fb).max() < 1e-14


@compiled
def test_kernel_accepts_plain_arrays_and_rejects_bad_shapes():
    from wickopt.lbm._kernel import step as cstep

    solid, f = state((6, 6, 6))
    g = np.zeros_like(np.ascontiguousarray(f))
    cstep(np.ascontiguousarray(f), g, solid, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        cstep(np.zeros((18, 6, 6, 6)), np.zeros((18, 6, 6, 6)), solid, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("backend", ["numpy", "compiled"])
def test_zou_he_moments(backend):
    if backend == "compiled" and lbm.BACKEND != "cython":
        pytest.skip("compiled kernel not built")
    step = _fallback.step if backend == "numpy" else lbm.step
    shape = (6, 7, 10)
    solid, f = state(shape, seed=3, porosity=1.0)
    g = population_array(shape)
    step(f, g, solid, 1.0, 1.01, 0.99)
    rho = g.sum(axis=0)
    jy = np.tensordot(_fallback.C[:, 1].astype(float), g, axes=1)
    jz = np.tensordot(_fallback.C[:, 2].astype(float), g, axes=1)
    assert np.allclose(rho[:, :, 0], 1.01, atol=1e-13)
    assert np.allclose(rho[:, :, -1], 0.99, atol=1e-13)
    # transverse correction: no tangential momentum at the density planes
    for face in (0, -1):
        assert np.abs(jy[:, :, face]).max() < 1e-13
        assert np.abs(jz[:, :, face]).max() < 1e-13


def test_rest_state_is_fixed_point():
    shape = (8, 8, 8)
    solid = np.zeros(shape, np.uint8)
    solid[2:4, 3:6, 1:7] = 1
    f = population_array(shape)
    f[...] = equilibrium(np.ones(shape), np.zeros((3,) + shape))
    f[:, solid.astype(bool)] = 0
    g = population_array(shape)
    jx, umax2 = lbm.step(f, g, solid, 1.0, 1.0, 1.0)
    assert abs(jx) < 1e-14 and umax2 < 1e-28
    assert np.allclose(g, f, atol=1e-15)


def test_solid_cell_short_circuits():
    m = Microstructure(unit_cell(np.ones((8, 8, 8), np.uint8)))
    flow = permeability_tensor(m)
    assert flow.k == (0.0, 0.0, 0.0) and flow.iterations == [0, 0, 0]


def test_too_small_rejected():
    with pytest.raises(ValueError):
        permeability_axis(np.zeros((4, 8, 8), bool), 0)


def test_duct_small():
    n = 16
    flow = permeability_axis(np.zeros((n, n, n), bool), 0, FAST)
    assert flow.converged
    assert flow.k_lattice / n ** 2 == pytest.approx(duct_oracle(), rel=0.03)
    assert flow.mass_flux_in == pytest.approx(flow.mass_flux_out, rel=5e-3)


def test_plane_gap_small():
    h, w, nx = 8, 64, 8
    solid = np.zeros((nx, w, h + 2), bool)
    solid[:, :, 0] = solid[:, :, -1] = True
    flow = permeability_axis(solid, 0, FAST)
    k_gap = flow.k_lattice * (h + 2) / h
    assert k_gap == pytest.approx(h * h / 12, rel=0.10)
    # finite width: the rectangular-duct series is the sharper oracle
    assert k_gap == pytest.approx(rect_duct_oracle(h, w), rel=0.03)


def test_divergence_detected():
    cfg = LbmConfig(tau=0.51, delta_rho=0.9, window=100, check_every=10, max_iters=2000)
    with pytest.raises(LbmDivergenceError):
        permeability_axis(np.zeros((8, 8, 16), bool), 0, cfg)


def test_nonpercolating_void_returns_zero():
    solid = np.zeros((10, 10, 10), bool)
    solid[5] = True  # wall across x
    assert permeability_axis(solid, 0).k_um2 == 0.0
    assert permeability_axis(solid, 1, FAST).k_um2 > 0


def porous(n=24, seed=1, v=0.35):
    return realize(SdfParams(4.0, 1.0, 1.2, 0.5, v, SdfType.CYL), n, seed)


def test_mass_conservation_and_dp_independence():
    m = porous()
    a = permeability_axis(m, 2, FAST)
    assert a.converged and a.k_um2 > 0
    assert a.mass_flux_in == pytest.approx(a.mass_flux_out, rel=5e-3)
    b = permeability_axis(m, 2, LbmConfig(**{**FAST.to_dict(), "delta_rho": 4e-3}))
    assert b.k_um2 == pytest.approx(a.k_um2, rel=0.01)


def test_axis_permutation():
    m = porous(20, seed=4)
    cfg = LbmConfig(window=300, rel_tol=1e-6, k_tol_um2=0.0, max_iters=3000)
    k = permeability_tensor(m, cfg).k
    perm = (2, 0, 1)
    mp = Microstructure(unit_cell(m.solid.transpose(perm).astype(np.uint8)), v_real=m.v_real)
    kp = permeability_tensor(mp, cfg).k
    assert kp == pytest.approx(tuple(k[p] for p in perm), rel=1e-9)


def test_reverse_agrees():
    m = porous(20, seed=2)
    flow = permeability_tensor(m, FAST, validate_reverse=True)
    assert max(flow.reverse_mismatch()) <= 0.02


def test_units_scale_with_voxel_size():
    solid = realize(SdfParams(4.0, 1.0, 1.2, 0.5, 0.3, SdfType.CYL), 16, 0).solid
    cfg = LbmConfig(window=200, rel_tol=1e-4, k_tol_um2=0.0, max_iters=2000)
    a = permeability_axis(solid, 0, cfg, voxel_size=1.0)
    b = permeability_axis(solid, 0, cfg, voxel_size=2.0)
    assert b.k_um2 == pytest.approx(4 * a.k_um2, rel=1e-12)


def test_velocity_field_orientation():
    n = 12
    flow = permeability_axis(np.zeros((n, n, n), bool), 1, LbmConfig(window=200, max_iters=600),
                             keep_velocity=True)
    v = flow.velocity
    assert v.shape == (3, n, n, n)
    assert v[1].mean() > 0 and abs(v[0]).max() < 1e-3 * v[1].max() + 1e-15


def test_fallback_full_run_matches():
    solid = np.zeros((8, 8, 12), np.uint8)
    solid[3:5, 2:6, 4:8] = 1
    cfg = LbmConfig(window=100, max_iters=300, rel_tol=0.0, k_tol_um2=0.0)
    a = run_axis(solid, cfg, step_fn=_fallback.step)
    b = run_axis(solid, cfg)
    assert a.k_lattice == pytest.approx(b.k_lattice, rel=1e-11)


def test_capillary_pressure():
    water = Fluid(contact_angle=0.0)
    assert capillary_pressure(water, 5.0) == pytest.approx(28_800)
    assert capillary_pressure(Fluid(contact_angle=math.pi / 2), 5.0) == pytest.approx(0, abs=1e-9)
    assert capillary_pressure(water, 10.0) == pytest.approx(0.5 * capillary_pressure(water, 5.0))
    with pytest.raises(ValueError):
        capillary_pressure(water, 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        LbmConfig(tau=0.5)
    with pytest.raises(ValueError):
        LbmConfig(delta_rho=0)
    with pytest.raises(ValueError):
        LbmConfig(window=0)
