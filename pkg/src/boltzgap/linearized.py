"""Dense matrices for the linearized collision operator in two scalings.

The core assembly works in the Gaussian-relative scaling (unknown h with
f = M + M h): the interpolated quantity is h itself, all Maxwellian factors
are evaluated exactly, and the tensor-quadratic stencils reproduce the
collision invariants, so the raw matrix annihilates {1, v, |v|^2} to
roundoff.  The stretched-scaling operator (f = M + m g) is the same
quadrature expressed in the other coordinates, i.e. the exact diagonal
conjugation by m^{-1} M; its spectrum-level agreement with the Gaussian
operator is then a solver/conditioning check, while genuinely independent
quadrature routes (hyperplane representation, nonlinear evaluator) guard the
discretization itself.

Operator outputs also satisfy the N+2 moment conditions in the continuum;
`conservation projection of outputs (a rank-(N+2) update, the operator
analogue of the Q projection) restores them exactly before spectral work and
its size is recorded.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _quadkernels as qk
from .collision import angular_table, invariant_basis
from .kernels import CollisionKernelSpec, MollifierConfig, b_delta, i_delta_radial
from .velocity_space import (
    SphereQuadrature,
    VelocityGrid,
    WeightFunction,
    maxwellian_values,
)

__all__ = [
    "LinearizedOperatorMatrix",
    "assemble_linearized",
    "assemble_gaussian_operator",
    "assemble_stretched_operator",
    "assemble_truncated_gain",
    "carleman_truncated_gain",
    "weighted_l1_opnorm",
    "l2m_opnorm",
    "operator_norm_report",
    "grad_kernel_bound_check",
    "measured_constants",
    "export_matrix",
    "load_matrix",
]

_ORDER = {"linear": 2, "quadratic": 3}


@dataclass
class LinearizedOperatorMatrix:
    """Parts of a linearized operator: full = gain - conv - diag(nu)."""

    grid: VelocityGrid
    kernel: CollisionKernelSpec
    sphere: SphereQuadrature
    scaling: str  # "gaussian" | "stretched" | "physical"
    gain: np.ndarray
    conv: np.ndarray
    nu: np.ndarray
    weight: Optional[WeightFunction] = None
    delta: Optional[float] = None
    interpolation: str = "quadratic"
    _full: Optional[np.ndarray] = field(default=None, repr=False)

    def full(self) -> np.ndarray:
        if self._full is None:
            self._full = self.gain - self.conv - np.diag(self.nu)
        return self._full

    @property
    def nu0(self) -> float:
        return float(np.min(self.nu))

    def scaling_values(self) -> np.ndarray:
        """Node values of the scaling function (M or m)."""
        mvals = maxwellian_values(self.grid)
        if self.scaling in ("gaussian", "physical"):
            return mvals
        return self.weight.on_grid(self.grid)

    def left_weight_values(self) -> np.ndarray:
        """Weight making the scaled output moments vanish: m (or M) itself."""
        return self.scaling_values()


def _kernel_call_args(grid, kernel, sphere, order, angular=None):
    if angular is None:
        if kernel.angular_is_constant:
            bc = float(kernel.b(np.array([0.0]))[0])
            iso, tx0, tdx, tv = True, -1.0, 1.0, np.array([bc, bc])
        else:
            iso, bc = False, 0.0
            tx0, tdx, tv = angular_table(kernel.b)
    else:
        iso, bc = False, 0.0
        tx0, tdx, tv = angular_table(angular)
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
        iso,
        bc,
        tx0,
        tdx,
        tv,
        order,
    )


def assemble_linearized(
    grid: VelocityGrid,
    kernel: CollisionKernelSpec,
    sphere: SphereQuadrature,
    mode: str = "relative",
    interpolation: str = "quadratic",
    angular=None,
    row_scale: Optional[np.ndarray] = None,
):
    """Raw quadrature parts (gain, conv, nu) in the requested mode.

    mode "relative": unknown is h = (f - M)/M, Maxwellians exact.
    mode "physical": unknown is d = f - M, the companion Maxwellian is
    interpolated from node values so the matrix is the exact linearization of
    the bilinear collision evaluator.
    """
    if not kernel.normalized and angular is None:
        raise ValueError("linearized assembly expects a normalized kernel (unit angular mass)")
    order = _ORDER[interpolation]
    rs = np.ones(grid.num_nodes) if row_scale is None else np.asarray(row_scale, float)
    args = _kernel_call_args(grid, kernel, sphere, order, angular)
    mvals = maxwellian_values(grid)
    gain, conv, nu = qk.assemble_raw(mvals, *args, rs, 0 if mode == "relative" else 1)
    return gain, conv, nu


def assemble_gaussian_operator(
    grid: VelocityGrid,
    kernel: CollisionKernelSpec,
    sphere: SphereQuadrature,
    interpolation: str = "quadratic",
) -> LinearizedOperatorMatrix:
    """Linearized operator in the Gaussian scaling (self-adjoint in L2(M))."""
    gain, conv, nu = assemble_linearized(grid, kernel, sphere, "relative", interpolation)
    return LinearizedOperatorMatrix(
        grid, kernel, sphere, "gaussian", gain, conv, nu, interpolation=interpolation
    )


def conjugation_scale(grid: VelocityGrid, weight: WeightFunction) -> np.ndarray:
    """Diagonal of the change of scaling h -> g: g = (M/m) h."""
    return maxwellian_values(grid) / weight.on_grid(grid)


def assemble_stretched_operator(
    base: LinearizedOperatorMatrix, weight: WeightFunction
) -> LinearizedOperatorMatrix:
    """Operator in the stretched scaling f = M + m g.

    Same quadrature path as the Gaussian assembly written in the other
    coordinates: the parts are the exact diagonal conjugations by m^{-1} M.
    """
    if base.scaling != "gaussian":
        raise ValueError("stretched operator is derived from the gaussian assembly")
    if weight.kind == "stretched" and not (
        0.0 < weight.s < 0.5 * base.kernel.gamma
    ):
        raise ValueError("stretched weight requires 0 < s < gamma/2")
    d = conjugation_scale(base.grid, weight)
    gain = d[:, None] * base.gain / d[None, :]
    conv = d[:, None] * base.conv / d[None, :]
    return LinearizedOperatorMatrix(
        base.grid,
        base.kernel,
        base.sphere,
        "stretched",
        gain,
        conv,
        base.nu.copy(),
        weight=weight,
        interpolation=base.interpolation,
    )


def assemble_physical_linearization(
    grid: VelocityGrid,
    kernel: CollisionKernelSpec,
    sphere: SphereQuadrature,
    interpolation: str = "quadratic",
) -> LinearizedOperatorMatrix:
    """Exact linearization of the nonlinear collision evaluator around M."""
    gain, conv, nu = assemble_linearized(grid, kernel, sphere, "physical", interpolation)
    return LinearizedOperatorMatrix(
        grid, kernel, sphere, "physical", gain, conv, nu, interpolation=interpolation
    )


def assemble_truncated_gain(
    grid: VelocityGrid,
    kernel: CollisionKernelSpec,
    sphere: SphereQuadrature,
    delta: float,
    weight: Optional[WeightFunction] = None,
    moll: Optional[MollifierConfig] = None,
    interpolation: str = "quadratic",
) -> LinearizedOperatorMatrix:
    """Gain part with angular truncation b_delta and smooth velocity cutoff.

    Returns a parts container whose `gain` is the truncated gain; conv and nu
    are zero (only the gain is modified by the approximation).  weight=None
    gives the Gaussian scaling, otherwise the stretched conjugation.
    """
    moll = moll or MollifierConfig(delta)
    angular = lambda t: b_delta(t, moll, kernel)
    speeds = grid.speeds()
    row_scale = i_delta_radial(speeds, moll, grid.dimension)
    order_name = interpolation
    gain, _, _ = assemble_linearized(
        grid, kernel, sphere, "relative", order_name, angular=angular, row_scale=row_scale
    )
    out = LinearizedOperatorMatrix(
        grid,
        kernel,
        sphere,
        "gaussian",
        gain,
        np.zeros_like(gain),
        np.zeros(grid.num_nodes),
        delta=delta,
        interpolation=interpolation,
    )
    if weight is not None:
        d = conjugation_scale(grid, weight)
        out = LinearizedOperatorMatrix(
            grid,
            kernel,
            sphere,
            "stretched",
            d[:, None] * gain / d[None, :],
            np.zeros_like(gain),
            np.zeros(grid.num_nodes),
            weight=weight,
            delta=delta,
            interpolation=interpolation,
        )
    return out


# --- conservation projection and spectral form ------------------------------


def output_projection_basis(grid: VelocityGrid) -> np.ndarray:
    """Orthonormal basis (in the L2(w M) sense) of the invariant directions."""
    mvals = maxwellian_values(grid)
    d = np.sqrt(grid.weights * mvals)
    phi = invariant_basis(grid)
    q, _ = np.linalg.qr(d[:, None] * phi)
    return q


def conservation_defect_of_operator(
    op: LinearizedOperatorMatrix, n_samples: int = 20, seed: int = 0
) -> float:
    """Relative size of the invariant moments of operator outputs.

    For the continuum operator int m (L g) phi dv = 0; the measured defect is
    the discretization's conservation error, removed by the output projection
    before spectral work.
    """
    rng = np.random.default_rng(seed)
    a = op.full()
    w = op.grid.weights
    lw = op.left_weight_values()
    phi = invariant_basis(op.grid)
    num = op.grid.num_nodes
    worst = 0.0
    for _ in range(n_samples):
        g = rng.standard_normal(num) * np.exp(-0.5 * op.grid.speeds() ** 2)
        out = a @ g
        mom = phi.T @ (w * lw * out)
        scale = np.dot(w, lw * np.abs(out)) * (1.0 + op.grid.speeds().max() ** 2)
        worst = max(worst, float(np.max(np.abs(mom)) / scale))
    return worst


@dataclass
class SpectralForm:
    """Symmetrized, output-projected matrix for the Gaussian scaling.

    s_matrix is symmetric in plain coordinates psi = sqrt(w M) h; both-sided
    invariant directions are annihilated exactly.  Diagnostics record the raw
    asymmetry and the size of the projections.
    """

    grid: VelocityGrid
    s_matrix: np.ndarray
    d_scale: np.ndarray  # psi = d_scale * h
    q_invariants: np.ndarray
    sym_defect_fro: float
    raw_null_radius: float

    def h_from_psi(self, psi: np.ndarray) -> np.ndarray:
        return psi / self.d_scale


def spectral_form(op: LinearizedOperatorMatrix) -> SpectralForm:
    if op.scaling != "gaussian":
        raise ValueError("spectral form is built from the Gaussian-scaling matrix")
    grid = op.grid
    mvals = maxwellian_values(grid)
    d = np.sqrt(grid.weights * mvals)
    a = op.full()
    s = (d[:, None] / d[None, :]) * a
    fro = float(np.linalg.norm(s - s.T) / np.linalg.norm(s))
    q = output_projection_basis(grid)
    # raw right-null quality of the assembled quadrature
    raw_null = float(np.linalg.norm(s @ q, 2) / np.linalg.norm(s, ord="fro") ** 0)
    s = 0.5 * (s + s.T)
    # project both sides: P S P with P = I - q q^T, via rank-(N+2) updates
    sq = s @ q
    qts = sq.T  # symmetric s
    s_proj = s - q @ qts - sq @ q.T + q @ (q.T @ sq) @ q.T
    s_proj = 0.5 * (s_proj + s_proj.T)
    return SpectralForm(grid, s_proj, d, q, fro, raw_null)


def stretched_spectral_matrix(
    form: SpectralForm, weight: WeightFunction
) -> np.ndarray:
    """Stretched-scaling matrix sharing the spectral regularization of L.

    Exact conjugation of the symmetrized, output-projected Gaussian matrix by
    m^{-1} M (expressed from psi-coordinates).
    """
    mvals = maxwellian_values(form.grid)
    scale = (mvals / weight.on_grid(form.grid)) / form.d_scale
    return (scale[:, None]) * form.s_matrix * (1.0 / scale)[None, :]


# --- operator norms ---------------------------------------------------------


def weighted_l1_opnorm(
    a: np.ndarray,
    grid: VelocityGrid,
    in_weight: Optional[np.ndarray] = None,
    out_weight: Optional[np.ndarray] = None,
) -> float:
    """Exact operator norm L1(win) -> L1(wout) of a dense matrix.

    ||g||_{L1(w)} = sum_i w_i win_i |g_i|; the norm is the max over columns of
    the weighted column sum divided by the column's input weight.
    """
    w = grid.weights
    win = np.ones_like(w) if in_weight is None else in_weight
    wout = np.ones_like(w) if out_weight is None else out_weight
    col = (w * wout) @ np.abs(a)
    return float(np.max(col / (w * win)))


def l2m_opnorm(a: np.ndarray, grid: VelocityGrid, power_iters: int = 60) -> float:
    """Operator norm on L2(M): largest singular value of the scaled matrix."""
    mvals = maxwellian_values(grid)
    d = np.sqrt(grid.weights * mvals)
    s = (d[:, None] / d[None, :]) * a
    n = s.shape[0]
    if n <= 2200:
        return float(np.linalg.svd(s, compute_uv=False)[0])
    rng = np.random.default_rng(1)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    st = s.T.copy()
    val = 0.0
    for _ in range(power_iters):
        y = s @ x
        x2 = st @ y
        val = np.linalg.norm(x2) ** 0.5
        nx = np.linalg.norm(x2)
        if nx == 0:
            return 0.0
        x = x2 / nx
    return float(np.sqrt(np.linalg.norm(st @ (s @ x))))


def operator_norm_report(
    op_full: LinearizedOperatorMatrix,
    op_delta: LinearizedOperatorMatrix,
    weight: WeightFunction,
) -> dict:
    """Empirical truncation-convergence norms for a truncated gain operator.

    gain_l1_gap: || gain - gain_delta || from L1(<v>^gamma) to L1 in the
    stretched scaling; gain_l2m_gap: the same difference in L2(M) operator
    norm in the Gaussian scaling.
    """
    grid = op_full.grid
    gamma = op_full.kernel.gamma
    bracket = grid.bracket(gamma)
    d = conjugation_scale(grid, weight)
    g_full = d[:, None] * op_full.gain / d[None, :]
    g_delta = d[:, None] * op_delta.gain / d[None, :]
    l1 = weighted_l1_opnorm(g_full - g_delta, grid, in_weight=bracket)
    l2 = l2m_opnorm(op_full.gain - op_delta.gain, grid)
    return {"gain_l1_gap": l1, "gain_l2m_gap": l2}


# --- bound checks and measured constants ------------------------------------


def grad_kernel_bound_check(
    op: LinearizedOperatorMatrix, sample_rows: Optional[int] = None, seed: int = 0
) -> dict:
    """Shape check of the gain kernel in the symmetrized convention.

    Writes the gain as an integral kernel acting on h M^{1/2} and fits the
    single constant C in
        k(u,v) <= C |u-v|^{1+gamma-N} exp[-|u-v|^2/4 - (|u|^2-|v|^2)^2/(4|u-v|^2)],
    reporting the fitted C, the violation count against it, and the Young
    row-sum surrogate max_u sum_v w |k|.
    """
    if op.scaling != "gaussian":
        raise ValueError("kernel bound check uses the Gaussian-scaling gain")
    grid = op.grid
    num = grid.num_nodes
    mvals = maxwellian_values(grid)
    w = grid.weights
    gamma = op.kernel.gamma
    ndim = grid.dimension
    rows = np.arange(num)
    if sample_rows is not None and sample_rows < num:
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(num, size=sample_rows, replace=False))
    nodes = grid.nodes
    fitted = 0.0
    rowsums = np.zeros(len(rows))
    for ri, i in enumerate(rows):
        k_row = op.gain[i] * np.sqrt(mvals[i]) / (np.sqrt(mvals) * w)
        diff = nodes[i][None, :] - nodes
        dd = np.sqrt(np.sum(diff**2, axis=1))
        sel = dd > 0
        du = dd[sel]
        vv = np.sum(nodes[i] ** 2) - np.sum(nodes[sel] ** 2, axis=1)
        env = du ** (1.0 + gamma - ndim) * np.exp(
            -0.25 * du**2 - 0.25 * vv**2 / du**2
        )
        ratio = np.abs(k_row[sel]) / env
        fitted = max(fitted, float(np.max(ratio)))
        rowsums[ri] = float(np.sum(w[sel] * np.abs(k_row[sel])))
    violations = 0
    for ri, i in enumerate(rows):
        k_row = op.gain[i] * np.sqrt(mvals[i]) / (np.sqrt(mvals) * w)
        diff = nodes[i][None, :] - nodes
        dd = np.sqrt(np.sum(diff**2, axis=1))
        sel = dd > 0
        du = dd[sel]
        vv = np.sum(nodes[i] ** 2) - np.sum(nodes[sel] ** 2, axis=1)
        env = du ** (1.0 + gamma - ndim) * np.exp(
            -0.25 * du**2 - 0.25 * vv**2 / du**2
        )
        violations += int(np.sum(np.abs(k_row[sel]) > fitted * env * (1 + 1e-9)))
    return {
        "fitted_constant": fitted,
        "violations": violations,
        "young_rowsum_max": float(np.max(rowsums)),
    }


def discrete_gradient_l1(a: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Column-wise L1 norm of the discrete gradient of the operator output."""
    n = grid.points_per_axis
    ndim = grid.dimension
    h = grid.spacing
    num = grid.num_nodes
    shape = (n,) * ndim + (a.shape[1],)
    cube = a.reshape(shape)
    w = grid.weights
    total = np.zeros(a.shape[1])
    for d in range(ndim):
        g = np.gradient(cube, h, axis=d).reshape(num, a.shape[1])
        total += w @ np.abs(g)
    return total


def measured_constants(
    op: LinearizedOperatorMatrix,
    op_delta: LinearizedOperatorMatrix,
    weight: WeightFunction,
    moll: Optional[MollifierConfig] = None,
) -> dict:
    """Discrete realizations of the gain/convolution boundedness constants.

    Keys name what each number bounds; all are exact discrete norms except
    the W^{1,1} surrogates which use central-difference gradients.
    """
    grid = op.grid
    gamma = op.kernel.gamma
    w = grid.weights
    bracket = grid.bracket(gamma)
    dscale = conjugation_scale(grid, weight)
    gain_m = dscale[:, None] * op.gain / dscale[None, :]
    gain_md = dscale[:, None] * op_delta.gain / dscale[None, :]
    conv_m = dscale[:, None] * op.conv / dscale[None, :]
    # (i) gain bounded L1(<v>^gamma) -> L1, both exact and truncated
    c3 = max(
        weighted_l1_opnorm(gain_m, grid, in_weight=bracket),
        weighted_l1_opnorm(gain_md, grid, in_weight=bracket),
    )
    # (ii) pointwise bound of the truncated gain by the velocity cutoff
    delta = op_delta.delta
    moll = moll or MollifierConfig(delta)
    cutoff = i_delta_radial(grid.speeds(), moll, grid.dimension)
    active = cutoff > 1e-14
    ratios = np.abs(gain_md[active]) / (cutoff[active][:, None] * (w[None, :]))
    c4 = float(np.max(ratios))
    dead_rows_ok = bool(np.all(np.abs(gain_md[~active]) < 1e-12))
    # (iii) W^{1,1} surrogate for the truncated gain
    col_l1 = w @ np.abs(gain_md)
    c5 = float(np.max((col_l1 + discrete_gradient_l1(gain_md, grid)) / w))
    # (iv) pointwise envelope of the convolution part
    mvals = maxwellian_values(grid)
    mw = weight.on_grid(grid)
    envelope = (mvals / mw) * bracket
    c6 = float(np.max(np.abs(conv_m) / (envelope[:, None] * w[None, :])))
    # (v) W^{1,1} surrogate for the convolution part
    col_l1c = w @ np.abs(conv_m)
    c7 = float(np.max((col_l1c + discrete_gradient_l1(conv_m, grid)) / w))
    # (vi) collision frequency envelope
    n0 = float(np.min(op.nu / bracket))
    n1 = float(np.max(op.nu / bracket))
    return {
        "gain_weighted_l1_bound": c3,
        "truncated_gain_pointwise_bound": c4,
        "truncated_gain_rows_vanish_outside_cutoff": dead_rows_ok,
        "truncated_gain_w11_bound": c5,
        "conv_envelope_bound": c6,
        "conv_w11_bound": c7,
        "nu_lower_ratio": n0,
        "nu_upper_ratio": n1,
    }


# --- hyperplane (Carleman-type) representation of the truncated gain --------


def carleman_truncated_gain(
    grid: VelocityGrid,
    kernel: CollisionKernelSpec,
    delta: float,
    weight: Optional[WeightFunction] = None,
    moll: Optional[MollifierConfig] = None,
    n_radial: int = 24,
    n_inner: int = 32,
    sphere: Optional[SphereQuadrature] = None,
    interpolation: str = "quadratic",
) -> np.ndarray:
    """Truncated gain assembled through the line/hyperplane representation.

    Independent quadrature route: the collision integral is rewritten as an
    outer integral over the offset W = v' - v and an inner integral over the
    hyperplane orthogonal to W, where the Gaussian factor reduces to a Bessel
    (N=3) or cosh (N=2) profile.  Used as a cross-check of the sigma-path
    assembly on coarse grids.
    """
    from scipy.special import i0e

    moll = moll or MollifierConfig(delta)
    ndim = grid.dimension
    num = grid.num_nodes
    if sphere is None:
        sphere = SphereQuadrature(ndim, 12, 24) if ndim == 3 else SphereQuadrature(2, n_azimuth=48)
    mvals = maxwellian_values(grid)
    mw = mvals if weight is None else weight.on_grid(grid)
    row_scale = i_delta_radial(grid.speeds(), moll, ndim) / mw

    def bdelta(u):
        return b_delta(u, moll, kernel)

    def btilde_sym(u):
        u = np.clip(u, 0.0, 1.0)
        up = np.sqrt(np.clip(1.0 - u * u, 0.0, 1.0))
        return (2.0 ** (ndim - 1)) * (
            u ** (ndim - 2) * bdelta(1.0 - 2.0 * u * u)
            + up ** (ndim - 2) * bdelta(1.0 - 2.0 * up * up)
        )

    d2 = delta**2
    r1 = math.sqrt((d2 / 2.0) / (1.0 - d2 / 2.0))
    r2 = 1.0 / r1

    # outer radial rule for |W|
    wmax = 2.0 * grid.extent * math.sqrt(ndim)
    tr, twr = np.polynomial.legendre.leggauss(n_radial)
    rw = 0.5 * wmax * (tr + 1.0)
    wrw = 0.5 * wmax * twr
    # inner rule on [r1 |W|, r2 |W|] built per radius below (scales linearly)
    ti, twi = np.polynomial.legendre.leggauss(n_inner)

    order = _ORDER[interpolation]
    a_car = np.zeros((num, num))
    nodes = grid.nodes
    x0 = float(grid.axis[0])
    h = grid.spacing
    n = grid.points_per_axis

    dirs = sphere.directions
    dweights = sphere.weights
    for kdir in range(len(dweights)):
        om = dirs[kdir]
        dw = dweights[kdir]
        for ir in range(n_radial):
            r = rw[ir]
            if r == 0.0:
                continue
            wgt_out = wrw[ir] * dw  # dW = r^{ndim-1} dr domega; |W|^{-(ndim-1)} cancels it
            rho = 0.5 * (r2 * r - r1 * r) * (ti + 1.0) + r1 * r
            wrho = 0.5 * (r2 * r - r1 * r) * twi
            u = r / np.sqrt(r * r + rho * rho)
            bt = btilde_sym(u)
            phi = kernel.c_phi * (r * r + rho * rho) ** (0.5 * kernel.gamma)
            # inner Gaussian profile per output node
            proj = nodes @ om  # v . What
            sq = np.sum(nodes**2, axis=1)
            vperp = np.sqrt(np.maximum(sq - proj**2, 0.0))
            if ndim == 3:
                arg = 2.0 * np.outer(vperp, rho)
                gaussian = (
                    2.0
                    * math.pi
                    * i0e(arg)
                    * np.exp(arg - rho[None, :] ** 2 - sq[:, None])
                )
            else:
                a1 = np.exp(
                    -((vperp[:, None] - rho[None, :]) ** 2) - (sq[:, None] - vperp[:, None] ** 2)
                )
                a2 = np.exp(
                    -((vperp[:, None] + rho[None, :]) ** 2) - (sq[:, None] - vperp[:, None] ** 2)
                )
                gaussian = a1 + a2
            inner = gaussian @ (wrho * bt * phi)  # per output node
            coeff = wgt_out * inner * row_scale
            # deposit (m g)(v + r om): stencil of each output node's shifted point
            pts = nodes + r * om[None, :]
            bases = []
            wts = []
            ok = np.ones(num, dtype=bool)
            for d in range(ndim):
                bb, ww, oo = qk._stencils_np(pts[:, d], x0, h, n, order)
                bases.append(bb)
                wts.append(ww)
                ok &= oo
            cc = np.where(ok, coeff, 0.0)
            rows = np.arange(num)
            for a in range(order):
                for c in range(order):
                    if ndim == 3:
                        for e in range(order):
                            cols = ((bases[0] + a) * n + bases[1] + c) * n + bases[2] + e
                            a_car[rows, np.clip(cols, 0, num - 1)] += (
                                cc * wts[0][:, a] * wts[1][:, c] * wts[2][:, e]
                            )
                    else:
                        cols = (bases[0] + a) * n + bases[1] + c
                        a_car[rows, np.clip(cols, 0, num - 1)] += (
                            cc * wts[0][:, a] * wts[1][:, c]
                        )
    # columns carry the scaling weight of the interpolated product m g
    a_car *= mw[None, :]
    return a_car


# --- persistence -------------------------------------------------------------


def export_matrix(path, op: LinearizedOperatorMatrix, which: str = "full") -> None:
    """Raw little-endian row-major doubles plus JSON metadata."""
    a = {"full": op.full(), "gain": op.gain, "conv": op.conv}[which]
    arr = np.ascontiguousarray(a, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())
    meta = {
        "rows": a.shape[0],
        "cols": a.shape[1],
        "dtype": "<f8",
        "order": "row-major",
        "which": which,
        "scaling": op.scaling,
        "delta": op.delta,
        "interpolation": op.interpolation,
        "grid": {
            "dimension": op.grid.dimension,
            "extent": op.grid.extent,
            "points_per_axis": op.grid.points_per_axis,
        },
        "kernel": {"gamma": op.kernel.gamma, "c_phi": op.kernel.c_phi},
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_matrix(path) -> tuple[np.ndarray, dict]:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    with open(path, "rb") as fh:
        arr = np.frombuffer(fh.read(), dtype="<f8")
    return arr.reshape(meta["rows"], meta["cols"]).astype(float), meta
