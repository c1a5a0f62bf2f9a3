import math

import numpy as np
import pytest
import scipy.linalg as sla

from boltzgap.linearized import LinearizedOperatorMatrix, spectral_form
from boltzgap.spectral import (
    eigendecompose_stretched,
    eigenvector_transfer_check,
    explicit_gap_lower_bound,
    hard_sphere_reference_bound,
    null_space_angles_deg,
    resolvent_scan,
    restricted_pair,
    sector_samples,
    semigroup_decay,
)
from boltzgap.velocity_space import WeightFunction


@pytest.fixture(scope="module")
def weight2():
    return WeightFunction.stretched(0.5, 0.2, gamma=1.0)


@pytest.fixture(scope="module")
def stretched2(rep2, op2, weight2):
    return eigendecompose_stretched(rep2, op2, weight2)


def test_explicit_gap_bound_values():
    # hard spheres in the unit c_b C_phi convention
    assert hard_sphere_reference_bound() == pytest.approx(0.0281, abs=2e-4)
    assert explicit_gap_lower_bound(1.0, 1.0, 1.0) == pytest.approx(
        math.pi / (48 * math.sqrt(2 * math.e)), rel=1e-12
    )
    # linear scaling in c_b and c_phi
    assert explicit_gap_lower_bound(1.0, 2.0, 3.0) == pytest.approx(
        6.0 * explicit_gap_lower_bound(1.0, 1.0, 1.0), rel=1e-12
    )
    # gamma = 1/2 value, cross-checked by independent arithmetic
    direct = 1.0 * 1.0 * (0.5 / 8.0) ** 0.25 * math.exp(-0.25) * math.pi / 24.0
    assert explicit_gap_lower_bound(0.5, 1.0, 1.0) == pytest.approx(direct, rel=1e-12)
    assert direct == pytest.approx(math.pi / 24.0 * 0.0625**0.25 * math.exp(-0.25), rel=1e-12)


def test_pure_loss_spectrum(kernel2, grid2, circle32):
    # gain and convolution zeroed: the spectrum is exactly -nu(v_i)
    from boltzgap.collision import collision_frequency

    nu = collision_frequency(grid2, kernel2, circle32)["nu"]
    num = grid2.num_nodes
    op = LinearizedOperatorMatrix(
        grid2, kernel2, circle32, "gaussian",
        np.zeros((num, num)), np.zeros((num, num)), nu,
    )
    evs = np.linalg.eigvalsh(spectral_form(op).s_matrix + 0)  # symmetric diag minus projections
    full = np.sort(-nu)
    # the projected diagonal matrix keeps the band; its top is near -nu0
    assert evs.max() <= 1e-10
    assert np.min(np.abs(evs.min() - full.min())) < 1e-8


def test_gaussian_report_structure(rep2, grid2):
    nn = grid2.dimension + 2
    assert len(rep2.null_indices) == nn
    assert rep2.null_radius < 1e-10
    assert 0 < rep2.gap < rep2.nu0
    assert rep2.flags["all_real"]
    angles = null_space_angles_deg(rep2, grid2)
    assert np.max(angles) < 1e-4
    # every eigenvalue below the onset is treated as a band shadow
    assert rep2.band_onset <= -0.8 * rep2.nu0


def test_stretched_spectrum_matches(rep2, stretched2):
    srep, a_m = stretched2
    idx = rep2.discrete_indices()
    for lam in rep2.eigenvalues.real[idx]:
        assert np.min(np.abs(srep.eigenvalues - lam)) < 1e-8 * max(1.0, abs(lam))
    assert srep.flags["imag_ok_above_onset"]
    assert abs(srep.gap - rep2.gap) < 1e-8


def test_transfer_check(rep2, stretched2, op2, grid2, weight2):
    srep, a_m = stretched2
    out = eigenvector_transfer_check(rep2, a_m, srep, weight2, grid2)
    assert out["max_residual"] < 1e-6
    assert out["all_matched"]
    assert out["no_unmatched"]


def test_transfer_detects_perturbation(rep2, stretched2, op2, grid2, weight2):
    # mutation check: a perturbed stretched operator must fail the transfer
    srep, a_m = stretched2
    bad = a_m + 0.05 * rep2.gap * np.eye(a_m.shape[0])
    out = eigenvector_transfer_check(rep2, bad, srep, weight2, grid2)
    assert out["max_residual"] > 1e-2


def test_semigroup_decay(rep2, stretched2, grid2, weight2):
    out = semigroup_decay(rep2.form, grid2, weight2, rep2.gap, n_steps=8, n_samples=12)
    assert out["sampled_norms"][0] == pytest.approx(1.0, abs=1e-12)
    assert out["sandwich_ok"]
    assert out["mu_fit"] >= 0.85 * rep2.gap
    # upper bounds decay
    assert out["upper_norms"][-1] < out["upper_norms"][0]


def test_semigroup_l2_exact_rate(rep2, op2):
    # spectral theorem: on the moment-zero subspace the symmetric semigroup
    # decays exactly like exp(-gap t) in L2(M)
    form = rep2.form
    t = 0.7 / rep2.gap
    e = sla.expm(form.s_matrix * t)
    q = form.q_invariants
    e_res = e - q @ (q.T @ e)  # remove the exactly invariant block
    norm2 = np.linalg.svd(e_res, compute_uv=False)[0]
    assert norm2 == pytest.approx(math.exp(-rep2.gap * t), rel=1e-10)


def test_resolvent_scan(rep2, op2, grid2, weight2):
    form = rep2.form
    shift = 10.0 * (rep2.nu0 + rep2.gap)
    s_res, conj_scale = restricted_pair(form, weight2, shift)
    nonnull = np.delete(rep2.eigenvalues.real, rep2.null_indices)
    mu = rep2.gap
    xi = sector_samples(mu, rep2.gap, nonnull, 24)
    assert len(xi) >= 20
    scan = resolvent_scan(s_res, conj_scale, grid2, nonnull, xi[:12], mu)
    assert scan["identity_max_rel_err"] <= 0.05
    assert scan["transfer_violations"] == 0
    assert scan["sector_violations"] == 0


def test_resolvent_real_axis_identity(rep2, op2, grid2, weight2):
    # far to the right of the restricted spectrum the L2(M) resolvent norm is
    # exactly 1/(xi + gap)
    form = rep2.form
    shift = 10.0 * (rep2.nu0 + rep2.gap)
    s_res, conj_scale = restricted_pair(form, weight2, shift)
    nonnull = np.delete(rep2.eigenvalues.real, rep2.null_indices)
    xi = np.array([10.0 * rep2.nu0 + 0j])
    scan = resolvent_scan(s_res, conj_scale, grid2, nonnull, xi, rep2.gap)
    assert scan["l2_norms"][0] == pytest.approx(1.0 / (xi[0].real + rep2.gap), rel=5e-3)


def test_sector_geometry(rep2):
    nonnull = np.delete(rep2.eigenvalues.real, rep2.null_indices)
    mu = rep2.gap
    xi = sector_samples(mu, rep2.gap, nonnull, 48)
    assert np.all(xi.real <= -0.5 * mu + 1e-9)
    assert np.all(np.abs(np.angle(xi + mu)) <= 0.75 * math.pi + 1e-9)


def test_asymptotic_profile(rep2, stretched2, grid2, weight2):
    from boltzgap.spectral import asymptotic_profile
    from boltzgap.velocity_space import maxwellian_values

    srep, a_m = stretched2
    lam = rep2.gap
    mvals = maxwellian_values(grid2)
    mw = weight2.on_grid(grid2)
    # propagate linearized snapshots g_t = exp(t A_m) g_0 exactly
    idx = rep2.discrete_indices()
    order = np.argsort(rep2.eigenvalues.real[idx])[::-1]
    h = rep2.eigvecs_h[:, idx][:, order]
    gap_vec = (mvals / mw) * h[:, grid2.dimension + 2]
    # skip the near-degenerate momentum-type cluster just below the gap
    deeper = (mvals / mw) * h[:, grid2.dimension + 5]
    times = np.linspace(0.0, 2.0 / lam, 6)
    e1 = sla.expm(a_m * (times[1] - times[0]))

    def snapshots_from(g0):
        out = []
        g = g0.copy()
        for k in range(len(times)):
            out.append(mvals + mw * g)
            g = e1 @ g
        return out

    # initial datum inside the gap eigenspace: the remainder stays at noise
    prof = asymptotic_profile(times, snapshots_from(gap_vec), weight2, grid2, a_m, lam)
    assert np.all(prof["remainder_l1"] <= 1e-8 * prof["profile_l1"])
    # generic mixture: remainder decays strictly faster than the profile
    mix = gap_vec + deeper
    prof2 = asymptotic_profile(times, snapshots_from(mix), weight2, grid2, a_m, lam)
    from boltzgap.dynamics import fit_decay_rate

    mu_p, _, _ = fit_decay_rate(prof2["times"][1:], prof2["profile_l1"][1:])
    mu_r, _, _ = fit_decay_rate(prof2["times"][1:], prof2["remainder_l1"][1:])
    assert mu_p == pytest.approx(lam, rel=1e-6)
    assert mu_r > mu_p + 0.05 * lam
    # the profile stays representable in L2(1/M)
    assert np.all(np.isfinite(prof2["profile_l2_minv"]))
