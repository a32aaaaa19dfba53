import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wickopt.recon import level_cut, reconstruct_field, white_noise
from wickopt.sdfgen import (
    TRUNCATION_SIGMAS,
    DegenerateSdfError,
    SdfParams,
    SdfType,
    build_sdf,
    center_offsets,
    radial_spectrum,
)


def offsets(n):
    d = center_offsets(n).astype(float)
    return np.meshgrid(d, d, d, indexing="ij")


params_st = st.builds(
    SdfParams,
    r=st.floats(3.0, 10.0),
    sigma=st.floats(0.3, 3.0),
    theta=st.floats(0.15, math.pi / 2),
    phi=st.floats(0.15, math.pi / 2),
    v=st.floats(0.15, 0.7),
    sdf_type=st.sampled_from([SdfType.SPH, SdfType.CYL]),
)


def test_radial_peak_value():
    p = SdfParams(7.40, 1.22, 1.25, 0.30, 0.4)
    assert radial_spectrum(7.40, p) == pytest.approx(0.3270, abs=5e-5)
    assert radial_spectrum(7.40, p) == pytest.approx(1 / (1.22 * math.sqrt(2 * math.pi)), rel=1e-14)


def test_radial_three_sigma():
    p = SdfParams(5.0, 0.8, 1.0, 1.0, 0.4)
    peak = radial_spectrum(5.0, p)
    assert radial_spectrum(5.0 + 3 * 0.8, p) == pytest.approx(math.exp(-4.5) * peak, rel=1e-12)
    assert math.exp(-4.5) == pytest.approx(0.0111, abs=1e-4)


def test_radial_errors():
    p = SdfParams(5.0, 0.8, 1.0, 1.0, 0.4)
    with pytest.raises(ValueError):
        radial_spectrum(-1.0, p)
    with pytest.raises(ValueError):
        SdfParams(5.0, 0.0, 1.0, 1.0, 0.4)
    with pytest.raises(ValueError):
        SdfParams(5.0, -1.0, 1.0, 1.0, 0.4)


def test_squat_cylinder_height():
    p = SdfParams(7.40, 1.22, 1.25, 0.30, 0.4, SdfType.CYL)
    assert p.h == pytest.approx(1.118, abs=5e-4)
    sdf = build_sdf(p, 32)
    dx, dy, dz = offsets(32)
    assert np.all(np.abs(dz[sdf > 0]) <= 1.118)
    assert np.any(dz[sdf > 0] == 1) and not np.any(np.abs(dz[sdf > 0]) >= 2)


def test_full_shell():
    p = SdfParams(6.0, 1.0, math.pi / 2, math.pi / 2, 0.4)
    n = 32
    sdf = build_sdf(p, n)
    dx, dy, dz = offsets(n)
    rad = np.sqrt(dx ** 2 + dy ** 2 + dz ** 2)
    shell = (rad > 0) & (np.abs(rad - p.r) <= TRUNCATION_SIGMAS * p.sigma)
    assert np.all(sdf[shell] > 0)
    assert np.all(sdf[~shell] == 0)


def test_values_follow_radial_profile():
    p = SdfParams(6.0, 1.5, 0.8, 0.6, 0.4)
    sdf = build_sdf(p, 24)
    dx, dy, dz = offsets(24)
    rad = np.sqrt(dx ** 2 + dy ** 2 + dz ** 2)
    nz = sdf > 0
    assert np.allclose(sdf[nz], radial_spectrum(rad[nz], p), rtol=1e-14)


def test_sph_membership_rule_brute_force():
    p = SdfParams(5.0, 1.0, 0.7, 0.4, 0.4)
    n = 16
    sdf = build_sdf(p, n)
    c = n // 2
    for i in range(n):
        for j in range(n):
            for k in range(n):
                x, y, z = i - c, j - c, k - c
                rad = math.sqrt(x * x + y * y + z * z)
                if rad == 0:
                    assert sdf[i, j, k] == 0
                    continue
                member = (abs(math.asin(y / rad)) <= p.theta + 1e-12
                          and math.atan2(abs(z), abs(x)) <= p.phi + 1e-12
                          and abs(rad - p.r) <= TRUNCATION_SIGMAS * p.sigma)
                assert (sdf[i, j, k] > 0) == member, (x, y, z)


@settings(max_examples=40)
@given(params_st, st.sampled_from([16, 17, 24]))
def test_symmetry_and_dc(p, n):
    try:
        sdf = build_sdf(p, n)
    except DegenerateSdfError:
        return
    assert sdf[n // 2, n // 2, n // 2] == 0
    assert np.all(sdf >= 0)
    # point symmetry away from the unpaired Nyquist planes
    inner = slice(1, None) if n % 2 == 0 else slice(None)
    a = sdf[inner, inner, inner]
    assert np.array_equal(a, a[::-1, ::-1, ::-1])


@settings(max_examples=40)
@given(params_st, st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_support_monotone_in_angles(p, dt, dp):
    try:
        small = build_sdf(p, 20) > 0
    except DegenerateSdfError:
        return
    big = build_sdf(p.replace(theta=p.theta + dt, phi=p.phi + dp), 20) > 0
    assert not np.any(small & ~big)


def test_degenerate_sdf():
    # a narrow shell that falls between lattice radii
    p = SdfParams(5.5, 0.06, 0.15, 0.15, 0.4)
    with pytest.raises(DegenerateSdfError):
        build_sdf(p, 32)
    with pytest.raises(ValueError):
        build_sdf(SdfParams(5.0, 1.0, 1.0, 1.0, 0.4), 4)


def jaccard(a, b):
    return (a & b).sum() / (a | b).sum()


def swapped_overlap(alpha, beta, r=12.0, sigma=1.5, n=64):
    a = build_sdf(SdfParams(r, sigma, alpha, beta, 0.4), n) > 0
    b = build_sdf(SdfParams(r, sigma, beta, alpha, 0.4), n).transpose(0, 2, 1) > 0
    return jaccard(a, b)


def test_sph_axis_swap_full_shell_exact():
    assert swapped_overlap(math.pi / 2, math.pi / 2) == 1.0


@pytest.mark.parametrize("alpha,beta", [(0.15, 0.15), (0.3, 0.3), (0.2, 0.3), (0.5, 0.3)])
def test_sph_axis_swap_narrow_sweeps(alpha, beta):
    assert swapped_overlap(alpha, beta) >= 0.95


def test_sph_axis_swap_is_approximate_for_wide_sweeps():
    # elevation is measured from the full radius, azimuth in the x-z plane,
    # so swapping y and z is not an exact symmetry of the rule
    assert 0.6 < swapped_overlap(0.15, 1.57) < 0.95
    assert 0.6 < swapped_overlap(1.0, 1.0) < 0.95


@pytest.mark.parametrize("c", [1e-3, 7.0, 1e4])
def test_scale_invariance_of_structure(c):
    p = SdfParams(6.0, 1.0, 1.0, 0.7, 0.35)
    sdf = build_sdf(p, 24)
    noise = white_noise(24, 3)[0]
    a = level_cut(reconstruct_field(sdf, noise), p.v)
    b = level_cut(reconstruct_field(c * sdf, noise), p.v)
    assert np.array_equal(a, b)
