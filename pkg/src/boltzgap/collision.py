"""Nonlinear collision operator Q = Q+ - Q-, collision frequency and entropy
production on the truncated grid.

The bilinear form interpolates both arguments at the post-collision points,
so Q(g, f) is exactly bilinear in the node values.  Conservation of the N+2
collision invariants holds up to quadrature/interpolation error; an optional
minimal-norm projection (shifts along M times the invariants) enforces the
moments exactly and its size is reported as a diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _quadkernels as qk
from .kernels import CollisionKernelSpec, MollifierConfig, b_delta
from .velocity_space import (
    DistributionField,
    SphereQuadrature,
    VelocityGrid,
    maxwellian_values,
)

__all__ = [
    "CollisionOperatorConfig",
    "q_plus",
    "q_minus",
    "q_full",
    "collision_frequency",
    "entropy_production",
    "conservation_defects",
    "project_conserved",
    "invariant_basis",
    "scaling_weight_ratio_bound",
]

_INTERP_ORDER = {"linear": 2, "quadratic": 3}


def angular_table(
    fn: Callable[[np.ndarray], np.ndarray], size: int = 8193
) -> tuple[float, float, np.ndarray]:
    """Uniform table of an angular profile over cos(theta) in [-1, 1]."""
    x = np.linspace(-1.0, 1.0, size)
    vals = np.asarray(fn(x), dtype=float)
    return -1.0, float(x[1] - x[0]), vals


@dataclass
class CollisionOperatorConfig:
    kernel: CollisionKernelSpec
    grid: VelocityGrid
    sphere: SphereQuadrature
    interpolation: str = "quadratic"
    conservation_projection: bool = True
    _tab: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.kernel.dimension != self.grid.dimension:
            raise ValueError("kernel and grid dimensions disagree")
        if self.sphere.dimension != self.grid.dimension:
            raise ValueError("sphere quadrature and grid dimensions disagree")
        if self.interpolation not in _INTERP_ORDER:
            raise ValueError(f"unknown interpolation scheme {self.interpolation!r}")
        if self.kernel.angular_is_constant:
            bc = float(self.kernel.b(np.array([0.0]))[0])
            self._tab = (True, bc, -1.0, 1.0, np.array([bc, bc]))
        else:
            tx0, tdx, tv = angular_table(self.kernel.b)
            self._tab = (False, 0.0, tx0, tdx, tv)

    @property
    def order(self) -> int:
        return _INTERP_ORDER[self.interpolation]

    def kernel_args(self):
        g = self.grid
        iso, bc, tx0, tdx, tv = self._tab
        return (
            float(g.axis[0]),
            g.spacing,
            g.points_per_axis,
            g.dimension,
            g.axis_weights,
            self.sphere.directions,
            self.sphere.weights,
            self.kernel.gamma,
            self.kernel.c_phi,
            iso,
            bc,
            tx0,
            tdx,
            tv,
            self.order,
        )


def _full_index(grid: VelocityGrid) -> np.ndarray:
    return np.arange(grid.num_nodes, dtype=np.int64)


def _evaluate(
    cfg: CollisionOperatorConfig,
    gvals: np.ndarray,
    fvals: np.ndarray,
    idx_out: Optional[np.ndarray] = None,
    idx_in: Optional[np.ndarray] = None,
):
    io = _full_index(cfg.grid) if idx_out is None else np.asarray(idx_out, dtype=np.int64)
    ii = _full_index(cfg.grid) if idx_in is None else np.asarray(idx_in, dtype=np.int64)
    gain, loss = qk.q_bilinear_raw(
        np.asarray(gvals, dtype=float),
        np.asarray(fvals, dtype=float),
        *cfg.kernel_args(),
        io,
        ii,
    )
    return gain, loss


def q_plus(g: DistributionField, f: DistributionField, cfg: CollisionOperatorConfig) -> DistributionField:
    """Gain term Q+(g, f)(v) = int phi b g(v'_*) f(v') dv_* dsigma."""
    _check_same_grid(g, f, cfg)
    gain, _ = _evaluate(cfg, g.values, f.values)
    return DistributionField(cfg.grid, gain)


def q_minus(g: DistributionField, f: DistributionField, cfg: CollisionOperatorConfig) -> DistributionField:
    """Loss term Q-(g, f) = (phi * g) f, convolution by direct double sum."""
    _check_same_grid(g, f, cfg)
    _, loss = _evaluate(cfg, g.values, f.values)
    return DistributionField(cfg.grid, loss)


def q_full(
    f: DistributionField,
    cfg: CollisionOperatorConfig,
    project: Optional[bool] = None,
) -> DistributionField:
    """Q(f, f) with optional exact conservation projection."""
    gain, loss = _evaluate(cfg, f.values, f.values)
    out = gain - loss
    if project is None:
        project = cfg.conservation_projection
    if project:
        out, _ = project_conserved(out, cfg.grid)
    return DistributionField(cfg.grid, out)


def _check_same_grid(g, f, cfg):
    if g.grid is not cfg.grid and g.grid.num_nodes != cfg.grid.num_nodes:
        raise ValueError("fields must live on the operator grid")
    if f.grid is not cfg.grid and f.grid.num_nodes != cfg.grid.num_nodes:
        raise ValueError("fields must live on the operator grid")


def invariant_basis(grid: VelocityGrid) -> np.ndarray:
    """Columns 1, v_1..v_N, |v|^2 evaluated on the nodes."""
    cols = [np.ones(grid.num_nodes)]
    for d in range(grid.dimension):
        cols.append(grid.nodes[:, d])
    cols.append(np.sum(grid.nodes ** 2, axis=1))
    return np.stack(cols, axis=1)


def project_conserved(
    qvals: np.ndarray, grid: VelocityGrid, mvals: Optional[np.ndarray] = None
) -> tuple[np.ndarray, float]:
    """Remove the collision-invariant moments by the minimal M-weighted shift.

    The correction lives in span{M phi_alpha}, the tangent directions of the
    Maxwellian family, and its L^1 size is returned for logging.
    """
    if mvals is None:
        mvals = maxwellian_values(grid)
    phi = invariant_basis(grid)
    w = grid.weights
    gram = phi.T @ (w[:, None] * mvals[:, None] * phi)
    rhs = phi.T @ (w * qvals)
    coef = np.linalg.solve(gram, rhs)
    corr = mvals * (phi @ coef)
    return qvals - corr, float(np.dot(w, np.abs(corr)))


def conservation_defects(qvals: np.ndarray, grid: VelocityGrid) -> dict:
    """Moments of a collision output against 1, v, |v|^2 (should vanish)."""
    phi = invariant_basis(grid)
    mom = phi.T @ (grid.weights * qvals)
    names = ["mass"] + [f"momentum_{d}" for d in range(grid.dimension)] + ["energy"]
    return dict(zip(names, (float(x) for x in mom)))


def collision_frequency(
    grid: VelocityGrid,
    kernel: CollisionKernelSpec,
    sphere: SphereQuadrature,
    chunk: int = 256,
) -> dict:
    """nu = (phi * M) times the angular mass, with grid envelope constants.

    Returns the node values, nu0 = min over the grid, and the fitted envelope
    ratios n0 <= nu/<v>^gamma <= n1.
    """
    mvals = maxwellian_values(grid)
    w = grid.weights
    nodes = grid.nodes
    num = grid.num_nodes
    nu = np.zeros(num)
    iso = kernel.angular_is_constant
    bsum_const = float(np.sum(sphere.weights) * kernel.b(np.array([0.0]))[0]) if iso else None
    for start in range(0, num, chunk):
        sl = slice(start, min(start + chunk, num))
        diff = nodes[sl, None, :] - nodes[None, :, :]
        dist = np.sqrt(np.sum(diff ** 2, axis=2))
        phiv = kernel.c_phi * dist ** kernel.gamma
        if iso:
            nu[sl] = (phiv * (w * mvals)[None, :]).sum(axis=1) * bsum_const
        else:
            denom = np.where(dist > 0, dist, 1.0)
            cos = np.einsum("ijd,kd->ijk", diff, sphere.directions) / denom[..., None]
            bbar = kernel.b(np.clip(cos, -1.0, 1.0)) @ sphere.weights
            nu[sl] = (phiv * bbar * (w * mvals)[None, :]).sum(axis=1)
    bracket = grid.bracket(kernel.gamma)
    ratios = nu / bracket
    return {
        "nu": nu,
        "nu0": float(np.min(nu)),
        "n0": float(np.min(ratios)),
        "n1": float(np.max(ratios)),
    }


def entropy_production(
    f: DistributionField,
    cfg: CollisionOperatorConfig,
    qvals: Optional[np.ndarray] = None,
    floor: float = 1e-300,
) -> dict:
    """D(f) = -int Q(f,f) log f, with tiny values clamped and counted."""
    if np.any(f.values < 0.0):
        raise ValueError("entropy production needs a nonnegative field")
    if qvals is None:
        qvals = q_full(f, cfg, project=False).values
    clamped = int(np.sum(f.values <= floor))
    safe = np.maximum(f.values, floor)
    d = -f.grid.integrate(qvals * np.log(safe))
    return {"entropy_production": float(d), "clamped_nodes": clamped}


def scaling_weight_ratio_bound(
    kernel: CollisionKernelSpec,
    a: float,
    s: float,
    rng: np.random.Generator,
    n_samples: int = 2000,
    radius: float = 6.0,
) -> dict:
    """Point-sampled check of m M_* / m' <= exp(a |v_*|^s - |v_*|^2).

    Samples (v, v_*, sigma) uniformly; returns the worst ratio of the left to
    the right side (<= 1 when the inequality holds).
    """
    if not (0.0 < s < 0.5 * kernel.gamma):
        raise ValueError("requires 0 < s < gamma/2")
    ndim = kernel.dimension
    v = rng.uniform(-radius, radius, size=(n_samples, ndim))
    vs = rng.uniform(-radius, radius, size=(n_samples, ndim))
    sig = rng.normal(size=(n_samples, ndim))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    rel = np.linalg.norm(v - vs, axis=1)
    vp = 0.5 * (v + vs) + 0.5 * rel[:, None] * sig
    m = lambda x: np.exp(-a * np.sum(x ** 2, axis=1) ** (0.5 * s))
    lhs = m(v) * np.exp(-np.sum(vs ** 2, axis=1)) / m(vp)
    rhs = np.exp(a * np.sum(vs ** 2, axis=1) ** (0.5 * s) - np.sum(vs ** 2, axis=1))
    ratio = lhs / rhs
    return {"max_ratio": float(np.max(ratio)), "violations": int(np.sum(ratio > 1.0 + 1e-12))}


def truncated_operator_config(
    cfg: CollisionOperatorConfig, delta: float, moll: Optional[MollifierConfig] = None
) -> CollisionOperatorConfig:
    """Config whose angular profile is the smooth truncation b_delta."""
    moll = moll or MollifierConfig(delta)
    spec = cfg.kernel
    fn = lambda t: b_delta(t, moll, spec)
    trunc = CollisionKernelSpec(
        dimension=spec.dimension,
        gamma=spec.gamma,
        c_phi=spec.c_phi,
        angular_profile=fn,
        c_b=spec.c_b,
        big_c_b=spec.big_c_b,
        normalized=False,
        angular_is_constant=False,
    )
    return CollisionOperatorConfig(
        kernel=trunc,
        grid=cfg.grid,
        sphere=cfg.sphere,
        interpolation=cfg.interpolation,
        conservation_projection=cfg.conservation_projection,
    )
