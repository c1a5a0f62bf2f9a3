import numpy as np
import pytest

from boltzgap.collision import invariant_basis
from boltzgap.kernels import MollifierConfig, i_delta_radial
from boltzgap.linearized import (
    assemble_gaussian_operator,
    assemble_physical_linearization,
    assemble_stretched_operator,
    assemble_truncated_gain,
    carleman_truncated_gain,
    conjugation_scale,
    export_matrix,
    grad_kernel_bound_check,
    l2m_opnorm,
    load_matrix,
    measured_constants,
    operator_norm_report,
    spectral_form,
    weighted_l1_opnorm,
)
from boltzgap.velocity_space import (
    SphereQuadrature,
    VelocityGrid,
    WeightFunction,
    maxwellian_values,
)


@pytest.fixture(scope="module")
def weight2():
    return WeightFunction.stretched(0.5, 0.2, gamma=1.0)


def test_parts_identity(op2):
    full = op2.full()
    assert np.allclose(full, op2.gain - op2.conv - np.diag(op2.nu))


def test_raw_matrix_annihilates_invariants(op2, grid2):
    a = op2.full()
    mvals = maxwellian_values(grid2)
    wl2m = lambda x: np.sqrt(np.dot(grid2.weights * mvals, x**2))
    for col in invariant_basis(grid2).T:
        assert wl2m(a @ col) / wl2m(col) < 1e-4


def test_symmetry_defect_and_dirichlet(op2, grid2, rng):
    form = spectral_form(op2)
    assert form.sym_defect_fro < 0.5  # entrywise spreading noise; action-level is far smaller
    assert form.raw_null_radius < 1e-2
    s = form.s_matrix
    assert np.allclose(s, s.T)
    # the spectral matrix is nonpositive: Dirichlet form of the linearized
    # entropy production
    for _ in range(20):
        psi = rng.standard_normal(grid2.num_nodes)
        assert psi @ (s @ psi) <= 1e-10 * (psi @ psi)


def test_adjoint_pairing(op2, grid2, rng):
    # <h1, A h2> = <A h1, h2> in L2(M) within the recorded defect
    mvals = maxwellian_values(grid2)
    w = grid2.weights * mvals
    a = op2.full()
    damp = np.exp(-0.3 * np.sum(grid2.nodes**2, axis=1))
    worst = 0.0
    for _ in range(10):
        h1 = rng.standard_normal(grid2.num_nodes) * damp
        h2 = rng.standard_normal(grid2.num_nodes) * damp
        lhs = np.dot(w * h1, a @ h2)
        rhs = np.dot(w * (a @ h1), h2)
        scale = op2.nu0 * np.sqrt(np.dot(w, h1**2) * np.dot(w, h2**2))
        worst = max(worst, abs(lhs - rhs) / scale)
    assert worst < 5e-2


def test_stretched_operator_is_exact_conjugation(op2, grid2, weight2):
    sop = assemble_stretched_operator(op2, weight2)
    d = conjugation_scale(grid2, weight2)
    manual = d[:, None] * op2.full() / d[None, :]
    assert np.allclose(sop.full(), manual, rtol=1e-13, atol=1e-13)
    # m = M reproduces the Gaussian operator
    wm = WeightFunction.maxwellian()
    same = assemble_stretched_operator(op2, wm)
    assert np.allclose(same.full(), op2.full(), rtol=0, atol=0)


def test_stretched_null_vector(op2, grid2, weight2):
    sop = assemble_stretched_operator(op2, weight2)
    g0 = conjugation_scale(grid2, weight2)  # m^{-1} M
    w = grid2.weights
    resid = np.dot(w, np.abs(sop.full() @ g0)) / np.dot(w, np.abs(g0))
    assert resid < 1e-4


def test_stretched_rejects_inadmissible_exponent(op2):
    bad = WeightFunction("stretched", a=0.5, s=0.8)
    with pytest.raises(ValueError):
        assemble_stretched_operator(op2, bad)


def test_truncated_gain_rows_vanish(kernel2, circle32):
    grid = VelocityGrid(2, 5.0, 21)
    delta = 0.25  # cutoff radius 1/delta = 4 lies inside the box
    trunc = assemble_truncated_gain(grid, kernel2, circle32, delta)
    cutoff = i_delta_radial(grid.speeds(), MollifierConfig(delta), 2)
    dead = cutoff == 0.0
    assert np.any(dead)
    assert np.max(np.abs(trunc.gain[dead])) == 0.0
    alive = ~dead
    assert np.max(np.abs(trunc.gain[alive])) > 0.0


def test_truncation_norms_shrink(op2, grid2, circle32, kernel2, weight2):
    n1 = operator_norm_report(op2, assemble_truncated_gain(grid2, kernel2, circle32, 0.4), weight2)
    n2 = operator_norm_report(op2, assemble_truncated_gain(grid2, kernel2, circle32, 0.1), weight2)
    assert n2["gain_l1_gap"] < n1["gain_l1_gap"]
    assert n2["gain_l2m_gap"] < n1["gain_l2m_gap"]


def test_measured_constants_report(op2, grid2, circle32, kernel2, weight2, rng):
    trunc = assemble_truncated_gain(grid2, kernel2, circle32, 0.3)
    consts = measured_constants(op2, trunc, weight2)
    for key in (
        "gain_weighted_l1_bound",
        "truncated_gain_pointwise_bound",
        "truncated_gain_w11_bound",
        "conv_envelope_bound",
        "conv_w11_bound",
    ):
        assert np.isfinite(consts[key]) and consts[key] > 0
    assert consts["truncated_gain_rows_vanish_outside_cutoff"]
    assert 0 < consts["nu_lower_ratio"] <= consts["nu_upper_ratio"]
    # the pointwise envelope of the convolution part holds on random fields
    d = conjugation_scale(grid2, weight2)
    conv_m = d[:, None] * op2.conv / d[None, :]
    mvals = maxwellian_values(grid2)
    env = consts["conv_envelope_bound"] * (mvals / weight2.on_grid(grid2)) * grid2.bracket(1.0)
    for _ in range(50):
        g = rng.standard_normal(grid2.num_nodes)
        lhs = np.abs(conv_m @ g)
        assert np.all(lhs <= env * np.dot(grid2.weights, np.abs(g)) * (1 + 1e-9))


def test_l1_opnorm_definition(grid2):
    a = np.zeros((grid2.num_nodes, grid2.num_nodes))
    a[0, 1] = 3.0
    norm = weighted_l1_opnorm(a, grid2)
    expected = grid2.weights[0] * 3.0 / grid2.weights[1]
    assert norm == pytest.approx(expected)


def test_grad_kernel_bound(op2):
    out = grad_kernel_bound_check(op2, sample_rows=80)
    assert np.isfinite(out["fitted_constant"]) and out["fitted_constant"] > 0
    assert out["violations"] == 0
    assert np.isfinite(out["young_rowsum_max"])


def test_grad_kernel_bound_stable_under_refinement(kernel2, circle32):
    vals = []
    for n in (15, 21):
        grid = VelocityGrid(2, 5.0, n)
        op = assemble_gaussian_operator(grid, kernel2, circle32)
        vals.append(grad_kernel_bound_check(op, sample_rows=60)["fitted_constant"])
    assert vals[1] < 4.0 * vals[0]


def test_carleman_cross_check(kernel2, weight2):
    grid = VelocityGrid(2, 5.0, 15)
    sq = SphereQuadrature(2, n_azimuth=256)
    sig = assemble_truncated_gain(grid, kernel2, sq, 0.4, weight=weight2)
    car = carleman_truncated_gain(grid, kernel2, 0.4, weight=weight2, n_radial=32, n_inner=48)
    mvals = maxwellian_values(grid)
    g0 = mvals / weight2.on_grid(grid)
    w = grid.weights
    l1 = lambda x: np.dot(w, np.abs(x))
    dev = l1(sig.gain @ g0 - car @ g0) / l1(sig.gain @ g0)
    assert dev < 5e-2
    assert np.all(car @ np.zeros(grid.num_nodes) == 0.0)


def test_carleman_deviation_shrinks_with_resolution(kernel2, weight2):
    devs = []
    for n in (15, 21):
        grid = VelocityGrid(2, 5.0, n)
        sq = SphereQuadrature(2, n_azimuth=256)
        sig = assemble_truncated_gain(grid, kernel2, sq, 0.4, weight=weight2)
        car = carleman_truncated_gain(grid, kernel2, 0.4, weight=weight2, n_radial=32, n_inner=48)
        g0 = maxwellian_values(grid) / weight2.on_grid(grid)
        w = grid.weights
        devs.append(np.dot(w, np.abs((sig.gain - car) @ g0)) / np.dot(w, np.abs(sig.gain @ g0)))
    assert devs[1] < 0.6 * devs[0]


def test_physical_linearization_consistency(kernel2, rng):
    # the physical-mode matrix is the exact derivative of the bilinear
    # collision evaluator around M
    from boltzgap.collision import CollisionOperatorConfig, _evaluate

    grid = VelocityGrid(2, 4.0, 13)
    sq = SphereQuadrature(2, n_azimuth=16)
    z = assemble_physical_linearization(grid, kernel2, sq)
    cop = CollisionOperatorConfig(kernel2, grid, sq)
    mvals = maxwellian_values(grid)
    d = 1e-4 * rng.standard_normal(grid.num_nodes) * mvals
    gain_p, loss_p = _evaluate(cop, mvals + d, mvals + d)
    gain_0, loss_0 = _evaluate(cop, mvals, mvals)
    gain_d, loss_d = _evaluate(cop, d, d)
    linear = (gain_p - loss_p) - (gain_0 - loss_0) - (gain_d - loss_d)
    assert np.allclose(linear, z.full() @ d, rtol=1e-8, atol=1e-10)


def test_matrix_export_roundtrip(op2, tmp_path):
    p = tmp_path / "op.bin"
    export_matrix(p, op2, which="full")
    a, meta = load_matrix(p)
    assert np.allclose(a, op2.full())
    assert meta["scaling"] == "gaussian"
    assert meta["grid"]["points_per_axis"] == op2.grid.points_per_axis


def test_l2m_opnorm_matches_dense_svd(op2, grid2):
    # power-iteration route agrees with the dense SVD on a small matrix
    dense = l2m_opnorm(op2.gain, grid2)
    mvals = maxwellian_values(grid2)
    d = np.sqrt(grid2.weights * mvals)
    s = (d[:, None] / d[None, :]) * op2.gain
    assert dense == pytest.approx(np.linalg.svd(s, compute_uv=False)[0], rel=1e-10)
