import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzgap.kernels import (
    CollisionKernelSpec,
    MollifierConfig,
    b_delta,
    ell_b,
    hard_potential_kernel,
    hard_sphere_kernel,
    i_delta_radial,
    indicator_i_delta,
    normalize_angular,
    phi,
    sphere_area,
)


def test_phi_values():
    assert phi(0.0, 1.0, 1.0) == 0.0
    assert phi(2.0, 1.0, 1.0) == 2.0  # hard spheres: kinetic factor is the speed itself
    assert phi(4.0, 0.5, 2.0) == pytest.approx(2.0 * 4.0**0.5)


def test_phi_rejects_negative_speed():
    with pytest.raises(ValueError):
        phi(-1.0, 1.0, 1.0)


def test_kernel_spec_rejects_bad_gamma():
    prof = lambda t: np.ones_like(t)
    for bad in (0.0, -0.5, 1.2):
        with pytest.raises(ValueError):
            CollisionKernelSpec(3, bad, 1.0, prof, 1.0, 1.0)


def test_ell_b_constant_profile():
    c = 0.37
    prof = lambda t: np.full_like(np.asarray(t, float), c)
    spec = CollisionKernelSpec(3, 1.0, 1.0, prof, c, c)
    assert ell_b(spec) == pytest.approx(4.0 * math.pi * c, rel=1e-10)


def test_ell_b_hard_sphere_normalized():
    assert ell_b(hard_sphere_kernel(3)) == pytest.approx(1.0, rel=1e-10)
    assert ell_b(hard_sphere_kernel(2)) == pytest.approx(1.0, rel=1e-10)
    assert ell_b(hard_potential_kernel(2, 0.5)) == pytest.approx(1.0, rel=1e-10)


def test_ell_b_rejects_vanishing_profile():
    prof = lambda t: np.zeros_like(np.asarray(t, float))
    spec = CollisionKernelSpec(3, 1.0, 1.0, prof, 1e-12, 1e-12)
    with pytest.raises(ValueError):
        ell_b(spec)


def test_normalize_angular():
    prof = lambda t: np.full_like(np.asarray(t, float), 2.0)
    spec = CollisionKernelSpec(3, 1.0, 1.0, prof, 2.0, 2.0)
    norm = normalize_angular(spec)
    assert norm.normalized
    assert ell_b(norm) == pytest.approx(1.0, rel=1e-10)
    assert norm.c_b == pytest.approx(norm.big_c_b)


def test_mollifier_masses():
    for delta in (0.5, 0.2):
        cfg = MollifierConfig(delta)
        assert cfg.mass_1d() == pytest.approx(1.0, rel=1e-10)
        for ndim in (2, 3):
            assert cfg.mass_nd(ndim) == pytest.approx(1.0, rel=1e-10)


def test_mollifier_rejects_bad_delta():
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            MollifierConfig(bad)


def test_b_delta_removes_grazing_and_frontal():
    spec = hard_sphere_kernel(3)
    cfg = MollifierConfig(0.3)
    assert b_delta(1.0, cfg, spec) == 0.0
    assert b_delta(-1.0, cfg, spec) == 0.0
    # vanishes on the whole removed band
    z = np.linspace(1 - 0.3**2, 1.0, 20)
    assert np.all(b_delta(z, cfg, spec) == 0.0)


def test_b_delta_matches_b_inside_support():
    spec = hard_sphere_kernel(3)
    cfg = MollifierConfig(0.1)
    b0 = float(spec.b(np.array([0.0]))[0])
    assert b_delta(0.0, cfg, spec) == pytest.approx(b0, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.0, 1.0), st.sampled_from([0.4, 0.2, 0.1]))
def test_b_delta_bounded_by_b(z, delta):
    spec = hard_sphere_kernel(3)
    cfg = MollifierConfig(delta)
    val = b_delta(z, cfg, spec)
    b = float(spec.b(np.array([z]))[0])
    assert 0.0 <= val <= b + 1e-14
    assert val <= spec.big_c_b + 1e-14


def test_b_delta_mass_increases_as_delta_shrinks():
    spec = hard_sphere_kernel(3)
    masses = []
    for delta in (0.4, 0.2, 0.1, 0.05):
        cfg = MollifierConfig(delta)
        trunc = CollisionKernelSpec(
            3, 1.0, 1.0, lambda t, c=cfg: b_delta(t, c, spec), spec.c_b, spec.big_c_b
        )
        masses.append(ell_b(trunc))
    masses.append(ell_b(spec))
    assert np.all(np.diff(masses) > -1e-10)
    assert masses[-2] == pytest.approx(masses[-1], rel=5e-3)


def test_indicator_center_and_outside():
    cfg = MollifierConfig(0.5)
    assert indicator_i_delta(np.zeros(3), cfg, 3) == pytest.approx(1.0)
    far = np.array([0.0, 0.0, 1.0 / 0.5 + 2 * 0.5])
    assert indicator_i_delta(far, cfg, 3) == 0.0


def test_indicator_midpoint_against_radial_convolution_oracle():
    # independent oracle: N=3 convolution reduced to a 1-D integral of the cap
    # fraction against the radial bump profile, on a dense Simpson grid
    delta = 0.5
    cfg = MollifierConfig(delta, quad_order=96)
    r = 1.0 / delta
    rho = np.linspace(1e-9, 1.0, 4001)
    from boltzgap.kernels import _bump_raw

    dens = _bump_raw(rho) * rho**2
    dens /= np.trapezoid(dens, rho)
    s = delta * rho
    t0 = np.clip((r**2 + s**2 - (1 / delta) ** 2) / (2 * r * s), -1.0, 1.0)
    frac = 0.5 * (1.0 - t0)
    oracle = np.trapezoid(dens * frac, rho)
    got = i_delta_radial(np.array([r]), cfg, 3)[0]
    assert got == pytest.approx(oracle, abs=2e-4)
    assert 0.0 < got < 1.0


def test_indicator_radially_nonincreasing_and_bounded():
    cfg = MollifierConfig(0.4)
    r = np.linspace(0.0, 4.0, 200)
    vals = i_delta_radial(r, cfg, 3)
    assert np.all((vals >= -1e-15) & (vals <= 1.0 + 1e-15))
    assert np.all(np.diff(vals) <= 1e-12)


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
