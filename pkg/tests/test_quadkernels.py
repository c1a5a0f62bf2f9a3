"""Compiled quadrature loops against the plain-numpy reference semantics."""

import numpy as np
import pytest

import boltzgap._quadkernels as qk
from boltzgap.kernels import hard_sphere_kernel
from boltzgap.velocity_space import SphereQuadrature, VelocityGrid, maxwellian_values


def _args(grid, kernel, sphere, order):
    bc = float(kernel.b(np.array([0.0]))[0])
    return (
        float(grid.axis[0]),
        grid.spacing,
        grid.points_per_axis,
        grid.dimension,
        grid.axis_weights,
        sphere.directions,
        sphere.weights,
        kernel.gamma,
        kernel.c_phi,
        True,
        bc,
        -1.0,
        1.0,
        np.array([bc, bc]),
        order,
    )


@pytest.mark.skipif(not qk.NUMBA_OK, reason="compiled path unavailable")
@pytest.mark.parametrize("ndim,n", [(2, 9), (3, 7)])
@pytest.mark.parametrize("order", [2, 3])
def test_bilinear_compiled_matches_reference(ndim, n, order, rng):
    kernel = hard_sphere_kernel(ndim)
    grid = VelocityGrid(ndim, 3.0, n)
    sphere = (
        SphereQuadrature(2, n_azimuth=8)
        if ndim == 2
        else SphereQuadrature(3, 3, 6)
    )
    g = rng.standard_normal(grid.num_nodes) * maxwellian_values(grid)
    f = rng.standard_normal(grid.num_nodes) * maxwellian_values(grid)
    idx = np.arange(grid.num_nodes, dtype=np.int64)
    args = _args(grid, kernel, sphere, order)
    gain_c, loss_c = qk._q_bilinear_nb(g, f, *args, idx, idx)
    gain_r, loss_r = qk._q_bilinear_np(g, f, *args, idx, idx)
    assert np.allclose(gain_c, gain_r, rtol=1e-12, atol=1e-13)
    assert np.allclose(loss_c, loss_r, rtol=1e-12, atol=1e-13)


@pytest.mark.skipif(not qk.NUMBA_OK, reason="compiled path unavailable")
@pytest.mark.parametrize("ndim,n", [(2, 9), (3, 7)])
@pytest.mark.parametrize("mode", [0, 1])
def test_assembly_compiled_matches_reference(ndim, n, mode):
    kernel = hard_sphere_kernel(ndim)
    grid = VelocityGrid(ndim, 3.0, n)
    sphere = (
        SphereQuadrature(2, n_azimuth=8)
        if ndim == 2
        else SphereQuadrature(3, 3, 6)
    )
    mvals = maxwellian_values(grid)
    rs = np.ones(grid.num_nodes)
    args = _args(grid, kernel, sphere, 3)
    ac, sc, nc = qk._assemble_nb(mvals, *args, rs, mode)
    ar, sr, nr = qk._assemble_np(mvals, *args, rs, mode)
    assert np.allclose(ac, ar, rtol=1e-12, atol=1e-14)
    assert np.allclose(sc, sr, rtol=1e-12, atol=1e-14)
    assert np.allclose(nc, nr, rtol=1e-12, atol=1e-14)


def test_active_list_restriction(rng):
    kernel = hard_sphere_kernel(2)
    grid = VelocityGrid(2, 3.0, 9)
    sphere = SphereQuadrature(2, n_azimuth=8)
    g = rng.standard_normal(grid.num_nodes) * maxwellian_values(grid)
    args = _args(grid, kernel, sphere, 3)
    idx = np.arange(grid.num_nodes, dtype=np.int64)
    active = idx[grid.speeds() <= 2.0]
    gain_full, _ = qk.q_bilinear_raw(g, g, *args, idx, idx)
    gain_act, _ = qk.q_bilinear_raw(g, g, *args, active, idx)
    assert np.allclose(gain_act[active], gain_full[active], rtol=1e-12)
    outside = np.setdiff1d(idx, active)
    assert np.all(gain_act[outside] == 0.0)


def test_stencil_reproduces_quadratics():
    # tensor-quadratic interpolation is exact on the collision invariants
    grid = VelocityGrid(2, 3.0, 11)
    vals = 1.0 + 2 * grid.nodes[:, 0] - grid.nodes[:, 1] + np.sum(grid.nodes**2, axis=1)
    pts = np.array([[0.3, -1.2], [2.9, 2.9], [-2.95, 0.01], [0.0, 0.0]])
    got = qk._interp_np(vals, pts, float(grid.axis[0]), grid.spacing, 11, 2, 3)
    want = 1.0 + 2 * pts[:, 0] - pts[:, 1] + np.sum(pts**2, axis=1)
    assert np.allclose(got, want, rtol=1e-12)


def test_interp_zero_outside_box():
    grid = VelocityGrid(2, 3.0, 11)
    vals = np.ones(grid.num_nodes)
    pts = np.array([[3.5, 0.0], [0.0, -3.01], [10.0, 10.0]])
    got = qk._interp_np(vals, pts, float(grid.axis[0]), grid.spacing, 11, 2, 3)
    assert np.all(got == 0.0)
