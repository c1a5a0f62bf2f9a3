"""Time integration of the homogeneous relaxation problem and the moment
machinery: rate fitting, Povzner sampling, exponential moments, Gronwall
certificates.

The solver advances the deviation d = f - M with
    dd/dt = Z d + Q(d, d),
where Z is the exact linearization of the bilinear collision evaluator around
the sampled Maxwellian.  This is the collision dynamics written in
well-balanced form (f = M is a fixed point of the discrete system to
roundoff), so measured distances to M decay to the scheme's floor instead of
stalling at the quadrature residual of Q(M, M); that residual is reported
separately as a diagnostic.  Conservation projection keeps the N+2 invariant
moments of d exactly zero along the trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gamma as gamma_fn

from .collision import CollisionOperatorConfig, invariant_basis, _evaluate
from .kernels import CollisionKernelSpec
from .velocity_space import (
    DistributionField,
    SphereQuadrature,
    VelocityGrid,
    WeightFunction,
    maxwellian_values,
)

__all__ = [
    "SolverConfig",
    "Trajectory",
    "RelaxationProblem",
    "integrate",
    "hermite_like_perturbation",
    "fit_decay_rate",
    "auto_fit_window",
    "moment_table",
    "povzner_check",
    "exp_moment",
    "gronwall_certificate",
    "fit_decay_prefactor",
    "bilinear_gamma_constant",
]

RK4_REAL_AXIS = 2.5  # conservative real-axis stability extent for classical RK4


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    scheme: str = "rk4"  # "rk4" | "rk4_lawson"
    project: bool = True
    snapshot_stride: int = 1
    store_fields: bool = False
    boundary_mass_tol: float = 1e-10

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.scheme not in ("rk4", "rk4_lawson"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def stability_budget(nu_max: float, scheme: str = "rk4") -> float:
    """Largest stable step for the explicit scheme on the loss term."""
    if scheme == "rk4_lawson":
        # diagonal loss handled exactly; budget set by the bounded gain part
        return RK4_REAL_AXIS / (0.6 * nu_max)
    return RK4_REAL_AXIS / nu_max


@dataclass
class Trajectory:
    times: np.ndarray
    diagnostics: dict
    grid: VelocityGrid
    final_values: np.ndarray
    snapshots: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def diag(self, key: str) -> np.ndarray:
        return np.asarray(self.diagnostics[key])


class RelaxationProblem:
    """Holds the grid-level objects a relaxation run needs.

    z_matrix is the linearization of the bilinear evaluator (physical mode);
    the quadratic remainder is evaluated with its own (typically coarser)
    sphere rule and an optional active-ball restriction, both reported in the
    metadata.  The quadratic term vanishes identically at d = 0, so the
    restriction never moves the equilibrium.
    """

    def __init__(
        self,
        grid: VelocityGrid,
        kernel: CollisionKernelSpec,
        z_matrix: np.ndarray,
        nu: np.ndarray,
        quad_sphere: SphereQuadrature,
        interpolation: str = "quadratic",
        active_radius: Optional[float] = None,
    ):
        self.grid = grid
        self.kernel = kernel
        self.z = z_matrix
        self.nu = nu
        self.mvals = maxwellian_values(grid)
        self.cfg_quad = CollisionOperatorConfig(
            kernel, grid, quad_sphere, interpolation=interpolation,
            conservation_projection=False,
        )
        speeds = grid.speeds()
        if active_radius is None:
            active_radius = grid.extent
        self.active = np.nonzero(speeds <= active_radius)[0].astype(np.int64)
        self.active_radius = float(active_radius)
        # Gram factors for the conservation projection of the deviation
        phi = invariant_basis(grid)
        w = grid.weights
        gram = phi.T @ (w[:, None] * self.mvals[:, None] * phi)
        self._phi = phi
        self._gram_cho = np.linalg.cholesky(gram)

    def quadratic(self, d: np.ndarray) -> np.ndarray:
        gain, loss = _evaluate(self.cfg_quad, d, d, self.active, self.active)
        return gain - loss

    def rhs(self, d: np.ndarray) -> np.ndarray:
        return self.z @ d + self.quadratic(d)

    def nonstiff_rhs(self, d: np.ndarray) -> np.ndarray:
        return self.rhs(d) + self.nu * d

    def moments_of(self, d: np.ndarray) -> np.ndarray:
        return self._phi.T @ (self.grid.weights * d)

    def project_deviation(
        self, d: np.ndarray, target: Optional[np.ndarray] = None
    ) -> np.ndarray:
        """Minimal M-weighted shift restoring the invariant moments to target."""
        rhs = self.moments_of(d)
        if target is not None:
            rhs = rhs - target
        y = np.linalg.solve(self._gram_cho, rhs)
        coef = np.linalg.solve(self._gram_cho.T, y)
        return d - self.mvals * (self._phi @ coef)


def hermite_like_perturbation(
    grid: VelocityGrid, seed: int = 0, n_modes: int = 4
) -> np.ndarray:
    """Smooth polynomial field orthogonal to the collision invariants in L2(M).

    Drawn from low-degree polynomials, Gram-Schmidt projected against
    {1, v, |v|^2} with the discrete M-weighted inner product, normalized to
    unit sup norm inside |v| <= extent.
    """
    rng = np.random.default_rng(seed)
    v = grid.nodes
    ndim = grid.dimension
    cands = [v[:, 0] * v[:, 1], v[:, 0] ** 2 - v[:, 1] ** 2, v[:, 0] ** 3, v[:, 1] ** 3]
    if ndim == 3:
        cands += [v[:, 2] ** 3, v[:, 0] * v[:, 2]]
    sq = np.sum(v**2, axis=1)
    cands.append(sq**2)
    coeffs = rng.standard_normal(len(cands))
    chi = sum(c * f for c, f in zip(coeffs[: n_modes + 3], cands))
    w = grid.weights
    mvals = maxwellian_values(grid)
    phi = invariant_basis(grid)
    gram = phi.T @ (w[:, None] * mvals[:, None] * phi)
    rhs = phi.T @ (w * mvals * chi)
    chi = chi - phi @ np.linalg.solve(gram, rhs)
    # unit M-weighted rms, so eps sets the relative perturbation of the core
    rms = math.sqrt(float(np.dot(w, mvals * chi**2) / np.dot(w, mvals)))
    return chi / rms


def integrate(
    f0: DistributionField,
    problem: RelaxationProblem,
    cfg: SolverConfig,
    diag_weight: Optional[WeightFunction] = None,
    moment_s: Optional[float] = None,
    moment_p: tuple = (),
) -> Trajectory:
    """Advance f = M + d and record the relaxation diagnostics."""
    grid = problem.grid
    w = grid.weights
    mvals = problem.mvals
    if f0.values.shape != mvals.shape:
        raise ValueError("initial field lives on a different grid")
    total = float(np.dot(w, f0.values))
    boundary = _boundary_mass_share(f0.values, grid)
    if boundary > cfg.boundary_mass_tol:
        raise ValueError(
            f"boundary mass share {boundary:.2e} exceeds tolerance "
            f"{cfg.boundary_mass_tol:.2e}; enlarge the box or loosen the tolerance"
        )
    nu_max = float(np.max(problem.nu))
    budget = stability_budget(nu_max, cfg.scheme)
    if cfg.dt > budget:
        raise ValueError(
            f"dt={cfg.dt:.4g} exceeds the stability budget {budget:.4g} "
            f"(max nu {nu_max:.3g}, scheme {cfg.scheme})"
        )

    d = f0.values - mvals
    target_moments = problem.moments_of(d)
    n_steps = int(round(cfg.t_end / cfg.dt))
    mw = diag_weight.on_grid(grid) if diag_weight is not None else None

    times = []
    diags: dict = {
        k: []
        for k in (
            "l1_dist",
            "l1_m_dist",
            "l1_m2_dist",
            "entropy",
            "entropy_production",
            "mass",
            "momentum_norm",
            "energy",
            "exp_moment",
            "negative_mass_share",
            "projection_l1",
        )
    }
    if moment_s is not None:
        for p in moment_p:
            diags[f"moment_{p}"] = []
    snapshots = []

    sq = np.sum(grid.nodes**2, axis=1)
    expw = None
    if diag_weight is not None and diag_weight.kind == "stretched":
        expw = np.exp(diag_weight.a * sq ** (0.5 * diag_weight.s))

    def record(t, d, rhs_val, proj_l1):
        f = mvals + d
        times.append(t)
        diags["l1_dist"].append(float(np.dot(w, np.abs(d))))
        if mw is not None:
            diags["l1_m_dist"].append(float(np.dot(w, np.abs(d) / mw)))
            diags["l1_m2_dist"].append(float(np.dot(w, np.abs(d) / mw**2)))
        else:
            diags["l1_m_dist"].append(np.nan)
            diags["l1_m2_dist"].append(np.nan)
        pos = np.maximum(f, 1e-300)
        diags["entropy"].append(float(np.dot(w, np.where(f > 0, f * np.log(pos), 0.0))))
        diags["entropy_production"].append(float(-np.dot(w, rhs_val * np.log(pos))))
        diags["mass"].append(float(np.dot(w, f)))
        diags["momentum_norm"].append(float(np.linalg.norm((w * f) @ grid.nodes)))
        diags["energy"].append(0.5 * float(np.dot(w * f, sq)))
        diags["exp_moment"].append(
            float(np.dot(w * f, expw)) if expw is not None else np.nan
        )
        diags["negative_mass_share"].append(
            float(np.dot(w, np.abs(np.minimum(f, 0.0))) / max(np.dot(w, np.abs(f)), 1e-300))
        )
        diags["projection_l1"].append(proj_l1)
        if moment_s is not None:
            for p in moment_p:
                diags[f"moment_{p}"].append(float(np.dot(w * f, sq ** (0.5 * moment_s * p))))
        if cfg.store_fields:
            snapshots.append((t, f.copy()))

    rhs0 = problem.rhs(d)
    record(0.0, d, rhs0, 0.0)
    t = 0.0
    dt = cfg.dt
    lawson = cfg.scheme == "rk4_lawson"
    if lawson:
        e_half = np.exp(-0.5 * dt * problem.nu)
        e_full = e_half * e_half
    for step in range(n_steps):
        if lawson:
            fF = problem.nonstiff_rhs
            k1 = fF(d)
            k2 = fF(e_half * (d + 0.5 * dt * k1))
            k3 = fF(e_half * d + 0.5 * dt * k2)
            k4 = fF(e_full * d + dt * e_half * k3)
            d_new = e_full * d + (dt / 6.0) * (
                e_full * k1 + 2.0 * e_half * (k2 + k3) + k4
            )
        else:
            k1 = problem.rhs(d)
            k2 = problem.rhs(d + 0.5 * dt * k1)
            k3 = problem.rhs(d + 0.5 * dt * k2)
            k4 = problem.rhs(d + dt * k3)
            d_new = d + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        proj_l1 = 0.0
        if cfg.project:
            projected = problem.project_deviation(d_new, target_moments)
            proj_l1 = float(np.dot(w, np.abs(projected - d_new)))
            d_new = projected
        d = d_new
        t += dt
        if not np.all(np.isfinite(d)):
            raise FloatingPointError(f"solution blew up at t={t:.4g} (reduce dt)")
        if (step + 1) % cfg.snapshot_stride == 0 or step == n_steps - 1:
            record(t, d, problem.rhs(d), proj_l1)

    return Trajectory(
        times=np.asarray(times),
        diagnostics={k: np.asarray(v) for k, v in diags.items()},
        grid=grid,
        final_values=mvals + d,
        snapshots=snapshots,
        meta={
            "dt": dt,
            "scheme": cfg.scheme,
            "nu_max": nu_max,
            "total_mass": total,
            "active_radius": problem.active_radius,
            "quad_sphere_points": problem.cfg_quad.sphere.num_points,
        },
    )


def _boundary_mass_share(fvals: np.ndarray, grid: VelocityGrid) -> float:
    n = grid.points_per_axis
    cube = fvals.reshape((n,) * grid.dimension)
    w = grid.weights
    mask = np.zeros((n,) * grid.dimension, dtype=bool)
    for d in range(grid.dimension):
        sl = [slice(None)] * grid.dimension
        sl[d] = 0
        mask[tuple(sl)] = True
        sl[d] = n - 1
        mask[tuple(sl)] = True
    share = np.dot(w[mask.reshape(-1)], np.abs(fvals[mask.reshape(-1)]))
    return float(share / max(np.dot(w, np.abs(fvals)), 1e-300))


# --- rate fitting ------------------------------------------------------------


def fit_decay_rate(t: np.ndarray, y: np.ndarray, window: Optional[tuple] = None):
    """Least-squares line on (t, log y): returns (rate, prefactor, rms_resid)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if len(t) < 2:
        raise ValueError("fit window has fewer than two samples")
    if np.any(y <= 0.0):
        raise ValueError("fit window contains nonpositive values")
    ly = np.log(y)
    a = np.stack([t, np.ones_like(t)], axis=1)
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - a @ coef
    return -float(coef[0]), float(np.exp(coef[1])), float(np.sqrt(np.mean(resid**2)))


def auto_fit_window(
    t: np.ndarray,
    y: np.ndarray,
    decades: float = 2.0,
    skip_fraction: float = 0.35,
    margin: float = 0.2,
) -> tuple:
    """Window starting below skip_fraction decades of the peak, spanning the
    requested number of decades (plus a sampling margin) above the floor."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    y0 = float(np.max(y))
    floor = float(np.min(y[y > 0])) if np.any(y > 0) else 0.0
    hi = y0 * 10 ** (-skip_fraction)
    lo = max(hi * 10 ** (-(decades + margin)), floor * 3.0)
    if lo >= hi * 10 ** (-margin):
        raise ValueError(
            f"trajectory does not span {decades} clean decades "
            f"(peak {y0:.3e}, floor {floor:.3e})"
        )
    sel = (y <= hi) & (y >= lo)
    if np.sum(sel) < 3:
        raise ValueError("fewer than three samples in the decay window")
    ts = t[sel]
    return float(ts.min()), float(ts.max())


# --- moments and Povzner ------------------------------------------------------


def moment_table(
    f: DistributionField, s: float, p_values, tail_share_flag: float = 0.01
) -> dict:
    """Moments m_p = int f |v|^{s p} and normalized z_p = m_p / Gamma(p + 1/2).

    Moments whose outermost-layer share exceeds tail_share_flag are flagged
    as truncation-limited.
    """
    grid = f.grid
    w = grid.weights
    sq = np.sum(grid.nodes**2, axis=1)
    n = grid.points_per_axis
    mask = np.zeros((n,) * grid.dimension, dtype=bool)
    for d in range(grid.dimension):
        sl = [slice(None)] * grid.dimension
        sl[d] = 0
        mask[tuple(sl)] = True
        sl[d] = n - 1
        mask[tuple(sl)] = True
    mask = mask.reshape(-1)
    out = {"s": s, "p": list(p_values), "m": [], "z": [], "tail_flag": []}
    for p in p_values:
        integrand = w * f.values * sq ** (0.5 * s * p)
        mp = float(np.sum(integrand))
        out["m"].append(mp)
        out["z"].append(mp / gamma_fn(p + 0.5))
        tail = float(np.sum(integrand[mask]) / mp) if mp > 0 else 0.0
        out["tail_flag"].append(bool(tail > tail_share_flag))
    return out


def povzner_check(
    kernel: CollisionKernelSpec,
    sphere: SphereQuadrature,
    n_samples: int,
    s: float,
    p_values,
    rng: np.random.Generator,
    radius: float = 4.5,
    chunk: int = 2048,
) -> dict:
    """Sampled Povzner ratios for the angular average of post-collision powers.

    K_p(v, v_*) = 1/2 int (|v'|^{sp} + |v'_*|^{sp} - |v|^{sp} - |v_*|^{sp}) b dsigma,
    alpha_hat_p = sup (K_p + |v|^{sp} + |v_*|^{sp}) / (|v|^2 + |v_*|^2)^{sp/2}.
    Exactly degenerate pairs (v = v_*) are skipped for the ratio.
    """
    dirs = sphere.directions
    sw = sphere.weights
    ndim = kernel.dimension
    res = {"s": s, "p": list(p_values), "alpha_hat": [], "k_abs_max": []}
    alpha = {p: 0.0 for p in p_values}
    kmax = {p: 0.0 for p in p_values}
    remaining = n_samples
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        v = rng.uniform(-radius, radius, size=(m, ndim))
        vs = rng.uniform(-radius, radius, size=(m, ndim))
        rel = v - vs
        dist = np.linalg.norm(rel, axis=1)
        keep = dist > 1e-12
        v, vs, rel, dist = v[keep], vs[keep], rel[keep], dist[keep]
        mid = 0.5 * (v + vs)
        cos = (rel @ dirs.T) / dist[:, None]
        b = kernel.b(np.clip(cos, -1.0, 1.0))
        vp = mid[:, None, :] + 0.5 * dist[:, None, None] * dirs[None, :, :]
        vq = mid[:, None, :] - 0.5 * dist[:, None, None] * dirs[None, :, :]
        sp2 = np.sum(vp**2, axis=2)
        sq2 = np.sum(vq**2, axis=2)
        e_v = np.sum(v**2, axis=1)
        e_vs = np.sum(vs**2, axis=1)
        for p in p_values:
            q = 0.5 * s * p
            pre = e_v**q + e_vs**q
            kp = 0.5 * ((sp2**q + sq2**q - pre[:, None]) * b) @ sw
            ratio = (kp + pre) / (e_v + e_vs) ** q
            alpha[p] = max(alpha[p], float(np.max(ratio)))
            kmax[p] = max(kmax[p], float(np.max(np.abs(kp))))
    for p in p_values:
        res["alpha_hat"].append(alpha[p])
        res["k_abs_max"].append(kmax[p])
    return res


def exp_moment(f: DistributionField, a: float, s: float) -> float:
    """int f exp(a |v|^s); a = 0 returns the mass."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    sq = np.sum(f.grid.nodes**2, axis=1)
    return float(f.grid.integrate(f.values * np.exp(a * sq ** (0.5 * s))))


# --- Gronwall-type certificate ------------------------------------------------


def fit_decay_prefactor(t: np.ndarray, y: np.ndarray, mu: float) -> float:
    """Smallest C with y(t) <= C y(0) exp(-mu t) on the whole series."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if y[0] <= 0:
        raise ValueError("series starts at zero")
    return float(np.max(y * np.exp(mu * t) / y[0]))


def gronwall_certificate(
    t: np.ndarray,
    y: np.ndarray,
    mu: float,
    a: float,
    b: float,
    theta: float = 0.5,
) -> dict:
    """Direct check of y(t) <= a e^{-mu t} y(0) + b int_0^t e^{-mu(t-s)} y^{1+theta} ds.

    The convolution integral is evaluated by the trapezoid rule on the
    series.  Returns the worst margin (<= 1 means the inequality holds) and
    the honest decay prefactor.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if np.any(y < 0):
        raise ValueError("series must be nonnegative")
    conv = np.zeros_like(y)
    integrand = y ** (1.0 + theta)
    for i in range(1, len(t)):
        kern = np.exp(-mu * (t[i] - t[: i + 1]))
        conv[i] = np.trapezoid(kern * integrand[: i + 1], t[: i + 1])
    bound = a * np.exp(-mu * t) * y[0] + b * conv
    margins = np.divide(y, bound, out=np.zeros_like(y), where=bound > 0)
    return {
        "max_margin": float(np.max(margins)),
        "holds": bool(np.max(margins) <= 1.0 + 1e-9),
        "prefactor": fit_decay_prefactor(t, y, mu) if y[0] > 0 else math.inf,
    }


def bilinear_gamma_constant(
    cfg: CollisionOperatorConfig,
    weight: WeightFunction,
    n_samples: int,
    rng: np.random.Generator,
) -> dict:
    """Empirical constant in ||Gamma(g,g)||_1 <= C ||g||_1^{3/2} ||g||_{L1(1/m)}^{1/2}.

    Gamma(g, g) = m^{-1} Q(m g, m g); samples are Gaussian-damped random
    polynomials.
    """
    grid = cfg.grid
    w = grid.weights
    mw = weight.on_grid(grid)
    sq = np.sum(grid.nodes**2, axis=1)
    damp = np.exp(-0.6 * sq)
    best = 0.0
    ratios = []
    for k in range(n_samples):
        coef = rng.standard_normal(4)
        g = damp * (
            coef[0]
            + coef[1] * grid.nodes[:, 0]
            + coef[2] * sq
            + coef[3] * grid.nodes[:, 0] * grid.nodes[:, 1]
        )
        l1 = float(np.dot(w, np.abs(g)))
        l1m = float(np.dot(w, np.abs(g) / mw))
        if l1 <= 0:
            continue
        gain, loss = _evaluate(cfg, mw * g, mw * g)
        gam = (gain - loss) / mw
        val = float(np.dot(w, np.abs(gam))) / (l1**1.5 * l1m**0.5)
        ratios.append(val)
        best = max(best, val)
    return {"constant": best, "samples": ratios}
