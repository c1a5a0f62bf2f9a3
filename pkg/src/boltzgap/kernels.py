"""Collision kernel models: hard potentials with angular cutoff.

The kernel is a product B(|v-v*|, cos th) = phi(|v-v*|) * b(cos th) with
phi(z) = c_phi * z**gamma, gamma in (0, 1], and a bounded angular profile
0 < c_b <= b <= C_b.  Smooth truncations of the angular profile (grazing and
frontal collisions removed) and of velocity space (smoothed ball indicator)
are provided for the approximate gain operators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "CollisionKernelSpec",
    "MollifierConfig",
    "hard_sphere_kernel",
    "hard_potential_kernel",
    "phi",
    "ell_b",
    "normalize_angular",
    "b_delta",
    "indicator_i_delta",
    "sphere_area",
]

_GAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-1, 1], cached."""
    if order not in _GAUSS_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GAUSS_CACHE[order] = (x, w)
    return _GAUSS_CACHE[order]


def gauss_on_interval(a: float, b: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gauss(order)
    mid, rad = 0.5 * (a + b), 0.5 * (b - a)
    return mid + rad * x, rad * w


def sphere_area(n_dim: int) -> float:
    """Surface measure of the unit sphere S^{n_dim-1}."""
    return 2.0 * math.pi ** (n_dim / 2.0) / math.gamma(n_dim / 2.0)


def _bump_raw(x: np.ndarray) -> np.ndarray:
    """Unnormalized C-infinity bump exp(-1/(1-x^2)) on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi * xi))
    return out


@dataclass(frozen=True)
class MollifierConfig:
    """Smoothing profiles used by the truncated gain operator.

    theta_1d is an even mass-one bump supported on [-1, 1]; the radial
    profile of the N-dimensional bump is the same shape, renormalized so the
    N-dimensional mass is one.  delta in (0, 1) sets all truncation scales.
    """

    delta: float
    quad_order: int = 64
    _norm_1d: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0,1), got {self.delta}")
        x, w = gauss_on_interval(-1.0, 1.0, self.quad_order)
        object.__setattr__(self, "_norm_1d", float(np.sum(w * _bump_raw(x))))

    def theta_1d(self, x) -> np.ndarray:
        """Even bump with unit mass and support [-1, 1]."""
        return _bump_raw(np.asarray(x, dtype=float)) / self._norm_1d

    def theta_1d_scaled(self, x, eps: float) -> np.ndarray:
        return self.theta_1d(np.asarray(x, dtype=float) / eps) / eps

    def radial_nd_norm(self, n_dim: int) -> float:
        """Normalization making the radial bump a unit-mass density on the unit ball."""
        r, w = gauss_on_interval(0.0, 1.0, self.quad_order)
        mass = sphere_area(n_dim) * float(np.sum(w * _bump_raw(r) * r ** (n_dim - 1)))
        return 1.0 / mass

    def mass_1d(self) -> float:
        x, w = gauss_on_interval(-1.0, 1.0, self.quad_order)
        return float(np.sum(w * self.theta_1d(x)))

    def mass_nd(self, n_dim: int) -> float:
        r, w = gauss_on_interval(0.0, 1.0, self.quad_order)
        c = self.radial_nd_norm(n_dim)
        return sphere_area(n_dim) * c * float(np.sum(w * _bump_raw(r) * r ** (n_dim - 1)))


@dataclass(frozen=True)
class CollisionKernelSpec:
    """Product collision kernel phi(z) * b(cos th) for cutoff hard potentials."""

    dimension: int
    gamma: float
    c_phi: float
    angular_profile: Callable[[np.ndarray], np.ndarray]
    c_b: float
    big_c_b: float
    normalized: bool = False
    angular_is_constant: bool = False
    ell_quad_order: int = 128

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError(
                f"gamma must lie in (0,1] (hard potentials with cutoff), got {self.gamma}"
            )
        if self.c_phi <= 0.0:
            raise ValueError("c_phi must be positive")
        if not (0.0 < self.c_b <= self.big_c_b):
            raise ValueError("angular bounds must satisfy 0 < c_b <= C_b")

    def phi(self, z):
        return phi(z, self.gamma, self.c_phi)

    def b(self, cos_theta):
        return np.asarray(self.angular_profile(np.asarray(cos_theta, dtype=float)), dtype=float)

    def angular_mass(self) -> float:
        return ell_b(self)


def phi(z, gamma: float, c_phi: float):
    """Kinetic factor c_phi * z**gamma; rejects negative relative speeds."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0):
        raise ValueError("relative speed must be nonnegative")
    return c_phi * z ** gamma


def ell_b(spec: CollisionKernelSpec) -> float:
    """Total angular mass |S^{N-2}| * int_0^pi b(cos th) sin^{N-2} th dth."""
    n = spec.dimension
    th, w = gauss_on_interval(0.0, math.pi, spec.ell_quad_order)
    vals = spec.b(np.cos(th)) * np.sin(th) ** (n - 2)
    if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
        raise ValueError("angular profile must be finite and nonnegative")
    total = float(sphere_area(n - 1) * np.sum(w * vals)) if n >= 3 else float(
        2.0 * np.sum(w * vals)
    )
    if total <= 0.0:
        raise ValueError("angular profile must not vanish identically")
    return total


def normalize_angular(spec: CollisionKernelSpec) -> CollisionKernelSpec:
    """Rescale the angular profile so its total mass equals one."""
    total = ell_b(spec)
    base = spec.angular_profile
    scaled = lambda t, _b=base, _c=total: np.asarray(_b(t), dtype=float) / _c
    return replace(
        spec,
        angular_profile=scaled,
        c_b=spec.c_b / total,
        big_c_b=spec.big_c_b / total,
        normalized=True,
    )


def hard_sphere_kernel(dimension: int = 3, c_phi: float = 1.0) -> CollisionKernelSpec:
    """Constant angular profile, gamma = 1, normalized so the angular mass is one."""
    area = sphere_area(dimension)
    const = 1.0 / area
    prof = lambda t, _c=const: np.full_like(np.asarray(t, dtype=float), _c)
    return CollisionKernelSpec(
        dimension=dimension,
        gamma=1.0,
        c_phi=c_phi,
        angular_profile=prof,
        c_b=const,
        big_c_b=const,
        normalized=True,
        angular_is_constant=True,
    )


def hard_potential_kernel(
    dimension: int, gamma: float, c_phi: float = 1.0
) -> CollisionKernelSpec:
    """Isotropic angular profile with general gamma in (0, 1], normalized."""
    area = sphere_area(dimension)
    const = 1.0 / area
    prof = lambda t, _c=const: np.full_like(np.asarray(t, dtype=float), _c)
    return CollisionKernelSpec(
        dimension=dimension,
        gamma=gamma,
        c_phi=c_phi,
        angular_profile=prof,
        c_b=const,
        big_c_b=const,
        normalized=True,
        angular_is_constant=True,
    )


def _mollified_indicator_1d(z, cfg: MollifierConfig) -> np.ndarray:
    """(Theta_{d^2} * 1_{[-1+2d^2, 1-2d^2]})(z): one well inside, zero past 1-d^2."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d2 = cfg.delta ** 2
    lo, hi = -1.0 + 2.0 * d2, 1.0 - 2.0 * d2
    out = np.zeros_like(z)
    flat = np.abs(z) <= 1.0 - 3.0 * d2
    out[flat] = 1.0
    ramp = (~flat) & (np.abs(z) < 1.0 - d2)
    if np.any(ramp):
        zr = z[ramp]
        a = np.maximum(zr - d2, lo)
        b = np.minimum(zr + d2, hi)
        x, w = _gauss(cfg.quad_order)
        mid = 0.5 * (a + b)
        rad = 0.5 * (b - a)
        pts = mid[:, None] + rad[:, None] * x[None, :]
        vals = cfg.theta_1d_scaled(zr[:, None] - pts, d2)
        out[ramp] = np.where(b > a, rad * np.sum(vals * w[None, :], axis=1), 0.0)
    return out


def b_delta(cos_theta, cfg: MollifierConfig, spec: CollisionKernelSpec) -> np.ndarray:
    """Angular profile with grazing and frontal collisions smoothly removed.

    Vanishes for |cos th| >= 1 - delta^2 and equals b(cos th) for
    |cos th| <= 1 - 3 delta^2.
    """
    z = np.asarray(cos_theta, dtype=float)
    scalar = z.ndim == 0
    res = _mollified_indicator_1d(z, cfg) * spec.b(np.atleast_1d(z))
    return float(res[0]) if scalar else res


def indicator_i_delta(v, cfg: MollifierConfig, n_dim: int):
    """Smoothed indicator of the ball of radius 1/delta.

    Radial convolution of the N-dimensional bump at scale delta with the ball
    indicator: equals 1 for |v| <= 1/delta - delta and 0 for
    |v| >= 1/delta + delta, radially nonincreasing in between.  Accepts a
    single velocity (length-N array) or a stack of them (m x N).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        out = i_delta_radial(np.array([float(np.linalg.norm(v))]), cfg, n_dim)
        return float(out[0])
    return i_delta_radial(np.linalg.norm(v, axis=-1), cfg, n_dim)


def i_delta_radial(r, cfg: MollifierConfig, n_dim: int) -> np.ndarray:
    """Radial profile of the smoothed ball indicator at radii r >= 0."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    d = cfg.delta
    rad_ball = 1.0 / d
    out = np.zeros_like(r)
    out[r <= rad_ball - d] = 1.0
    mid = (r > rad_ball - d) & (r < rad_ball + d)
    if not np.any(mid):
        return out
    rho, w = gauss_on_interval(0.0, 1.0, cfg.quad_order)
    c_nd = cfg.radial_nd_norm(n_dim)
    dens = c_nd * _bump_raw(rho) * rho ** (n_dim - 1)  # unit-ball radial density
    rm = r[mid][:, None]
    s = (d * rho)[None, :]
    # fraction of the sphere |y| = s centered at distance rm that lies in the ball
    t0 = (rm ** 2 + s ** 2 - rad_ball ** 2) / (2.0 * rm * s)
    t0 = np.clip(t0, -1.0, 1.0)
    if n_dim == 3:
        frac = 0.5 * (1.0 - t0)
    elif n_dim == 2:
        frac = np.arccos(t0) / math.pi
    else:
        # general N: cap fraction via 1-D quadrature in the polar angle
        tq, tw = gauss_on_interval(-1.0, 1.0, cfg.quad_order)
        kern = (1.0 - tq ** 2) ** ((n_dim - 3) / 2.0)
        full = float(np.sum(tw * kern))
        mask = tq[None, None, :] >= t0[:, :, None]
        frac = np.sum(tw[None, None, :] * kern[None, None, :] * mask, axis=2) / full
    out[mid] = sphere_area(n_dim) * np.sum((w * dens)[None, :] * frac, axis=1)
    return np.clip(out, 0.0, 1.0)
