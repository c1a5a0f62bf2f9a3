import math

import numpy as np
import pytest
from scipy.integrate import quad

from boltzgap.collision import (
    CollisionOperatorConfig,
    collision_frequency,
    conservation_defects,
    entropy_production,
    project_conserved,
    q_full,
    q_minus,
    q_plus,
    scaling_weight_ratio_bound,
)
from boltzgap.kernels import hard_sphere_kernel
from boltzgap.velocity_space import (
    DistributionField,
    SphereQuadrature,
    VelocityGrid,
    maxwellian_field,
    maxwellian_values,
)


@pytest.fixture(scope="module")
def cop2(kernel2, grid2, circle32):
    return CollisionOperatorConfig(kernel2, grid2, circle32)


def test_config_rejects_mismatched_dimensions(kernel2):
    g3 = VelocityGrid(3, 3.0, 7)
    s2 = SphereQuadrature(2, n_azimuth=8)
    with pytest.raises(ValueError):
        CollisionOperatorConfig(kernel2, g3, SphereQuadrature(3, 4, 8))
    g2 = VelocityGrid(2, 3.0, 7)
    with pytest.raises(ValueError):
        CollisionOperatorConfig(hard_sphere_kernel(3), g2, s2)


def test_gain_equals_loss_at_equilibrium(cop2, grid2):
    M = maxwellian_field(grid2)
    gain = q_plus(M, M, cop2)
    loss = q_minus(M, M, cop2)
    scale = grid2.integrate(np.abs(loss.values))
    assert grid2.integrate(np.abs(gain.values - loss.values)) / scale < 1e-2


def test_gain_bilinear_in_first_argument(cop2, grid2):
    M = maxwellian_field(grid2)
    zero = DistributionField(grid2, np.zeros(grid2.num_nodes))
    assert np.all(q_plus(zero, M, cop2).values == 0.0)
    two = DistributionField(grid2, 2.0 * M.values)
    assert np.allclose(
        q_plus(two, M, cop2).values, 2.0 * q_plus(M, M, cop2).values, rtol=1e-12
    )


def test_gain_mass_identity_random_field(cop2, grid2, rng):
    # int Q+(M, f) = int nu f: mass moves between gain and loss consistently
    M = maxwellian_field(grid2)
    f = DistributionField(
        grid2, np.abs(maxwellian_values(grid2) * (1 + 0.5 * rng.standard_normal(grid2.num_nodes)))
    )
    gain_mass = q_plus(M, f, cop2).mass()
    nu = collision_frequency(grid2, cop2.kernel, cop2.sphere)["nu"]
    loss_mass = grid2.integrate(nu * f.values)
    assert gain_mass == pytest.approx(loss_mass, rel=5e-3)


def test_q_minus_with_maxwellian_is_collision_frequency(cop2, grid2):
    M = maxwellian_field(grid2)
    f = DistributionField(grid2, grid2.bracket(1.0))
    got = q_minus(M, f, cop2).values
    nu = collision_frequency(grid2, cop2.kernel, cop2.sphere)["nu"]
    assert np.allclose(got, nu * f.values, rtol=1e-10)


def test_q_minus_zero_field(cop2, grid2):
    M = maxwellian_field(grid2)
    zero = DistributionField(grid2, np.zeros(grid2.num_nodes))
    assert np.all(q_minus(M, zero, cop2).values == 0.0)


def test_q_minus_point_mass(cop2, grid2):
    # a single hot node at the origin acts as phi(|v|) times the node weight
    gvals = np.zeros(grid2.num_nodes)
    i0 = np.argmin(grid2.speeds())
    gvals[i0] = 1.0
    g = DistributionField(grid2, gvals)
    f = maxwellian_field(grid2)
    got = q_minus(g, f, cop2).values
    expected = grid2.weights[i0] * grid2.speeds() * f.values  # b-average is 1
    assert np.allclose(got, expected, rtol=1e-10)


def test_collision_frequency_against_radial_oracle(kernel2, circle32):
    grid = VelocityGrid(2, 5.0, 41)
    out = collision_frequency(grid, kernel2, circle32)
    i0 = int(np.argmin(grid.speeds()))
    oracle0 = math.pi * quad(lambda s: s**2 * math.exp(-(s**2)), 0, 8)[0] * 2
    assert out["nu"][i0] == pytest.approx(oracle0, rel=5e-3)
    # radial and increasing in |v|
    on_axis = [np.argmin(np.abs(grid.nodes[:, 0] - x) + np.abs(grid.nodes[:, 1])) for x in (0, 1, 2, 3)]
    vals = out["nu"][on_axis]
    assert np.all(np.diff(vals) > 0)
    assert 0 < out["n0"] <= out["n1"]


def test_collision_frequency_n3_value():
    kernel = hard_sphere_kernel(3)
    grid = VelocityGrid(3, 4.5, 15)
    sphere = SphereQuadrature(3, 4, 8)
    out = collision_frequency(grid, kernel, sphere)
    # closed form at the origin: int |w| e^{-|w|^2} dw = 2 pi
    assert out["nu0"] == pytest.approx(2 * math.pi, rel=0.02)


def test_q_full_vanishes_at_equilibrium(cop2, grid2):
    M = maxwellian_field(grid2)
    q = q_full(M, cop2, project=False)
    nu = collision_frequency(grid2, cop2.kernel, cop2.sphere)["nu"]
    scale = grid2.integrate(nu * M.values)
    assert grid2.integrate(np.abs(q.values)) / scale < 1e-2


def test_conservation_and_projection(cop2, grid2, rng):
    f = DistributionField(
        grid2, np.abs(maxwellian_values(grid2) * (1 + 0.5 * rng.standard_normal(grid2.num_nodes)))
    )
    raw = q_full(f, cop2, project=False).values
    gain = q_plus(f, f, cop2).values
    scale = grid2.integrate(np.abs(gain) * grid2.bracket(2.0))
    defects = conservation_defects(raw, grid2)
    assert max(abs(v) for v in defects.values()) / scale < 5e-3
    projected, corr = project_conserved(raw, grid2)
    defects_p = conservation_defects(projected, grid2)
    assert max(abs(v) for v in defects_p.values()) / scale < 1e-14
    assert corr > 0.0


def test_q_commutes_with_velocity_reflection(cop2, grid2):
    # symmetric input: Q(f,f) inherits the v -> -v symmetry
    f = DistributionField(
        grid2, maxwellian_values(grid2) * (1.0 + 0.3 * np.sum(grid2.nodes**2, axis=1) ** 0.5)
    )
    q = q_full(f, cop2, project=False).values
    n = grid2.points_per_axis
    cube = q.reshape(n, n)
    assert np.allclose(cube, cube[::-1, ::-1], atol=1e-12 * np.max(np.abs(q)))


def test_entropy_production_signs(cop2, grid2, rng):
    M = maxwellian_field(grid2)
    d0 = entropy_production(M, cop2)["entropy_production"]
    # equilibrium: log M is a collision-invariant combination, so D vanishes
    # up to the quadrature defect of Q(M, M)
    assert abs(d0) < 1e-2 * cop2.kernel.c_phi * M.mass() ** 2
    f = DistributionField(
        grid2, np.abs(maxwellian_values(grid2) * (1 + 0.8 * rng.standard_normal(grid2.num_nodes)))
    )
    d1 = entropy_production(f, cop2)["entropy_production"]
    assert d1 > 0.0
    # any Maxwellian of the family inside the box is near-stationary
    fam = DistributionField(
        grid2, 0.7 * np.exp(-1.3 * np.sum((grid2.nodes - np.array([0.4, -0.2])) ** 2, axis=1))
    )
    dfam = entropy_production(fam, cop2)["entropy_production"]
    assert abs(dfam) < 5e-2 * cop2.kernel.c_phi * fam.mass() ** 2


def test_entropy_production_rejects_negative(cop2, grid2):
    f = DistributionField(grid2, -np.ones(grid2.num_nodes))
    with pytest.raises(ValueError):
        entropy_production(f, cop2)


def test_scaling_weight_ratio_bound(rng):
    out = scaling_weight_ratio_bound(hard_sphere_kernel(3), 0.5, 0.2, rng, n_samples=3000)
    assert out["violations"] == 0
    assert out["max_ratio"] <= 1.0 + 1e-12


def test_sign_error_mutation_is_caught(cop2, grid2, rng):
    # smoke test of the detection chain: flipping the loss sign must blow up
    # the collision-invariant moments that q_full keeps near zero
    f = DistributionField(
        grid2, np.abs(maxwellian_values(grid2) * (1 + 0.5 * rng.standard_normal(grid2.num_nodes)))
    )
    gain = q_plus(f, f, cop2).values
    loss = q_minus(f, f, cop2).values
    scale = grid2.integrate(np.abs(gain) * grid2.bracket(2.0))
    good = max(abs(v) for v in conservation_defects(gain - loss, grid2).values()) / scale
    mutated = max(abs(v) for v in conservation_defects(gain + loss, grid2).values()) / scale
    assert mutated > 100 * good
    assert mutated > 0.1
