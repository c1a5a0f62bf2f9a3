"""Truncated velocity grids, sphere quadrature, weights, fields and moments.

Velocity space is the cube [-R, R]^N sampled on a uniform tensor grid with an
odd number of points per axis (so the origin is a node) and product trapezoid
weights.  Trapezoid sums of Gaussian-type integrands converge superalgebraically,
so truncation at R with exp(-R^2) small dominates the error budget.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "VelocityGrid",
    "SphereQuadrature",
    "DistributionField",
    "WeightFunction",
    "maxwellian_field",
    "maxwellian_values",
    "moments",
    "weighted_norm",
    "h_functional",
    "save_field_csv",
    "load_field_csv",
    "save_field_binary",
    "load_field_binary",
]


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform Cartesian grid on [-extent, extent]^dimension with trapezoid weights."""

    dimension: int
    extent: float
    points_per_axis: int
    axis: np.ndarray = field(init=False, repr=False)
    axis_weights: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        n = self.points_per_axis
        if n < 3 or n % 2 == 0:
            raise ValueError("points_per_axis must be odd and >= 3 so 0 is a node")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        ax = np.linspace(-self.extent, self.extent, n)
        aw = np.full(n, ax[1] - ax[0])
        aw[0] *= 0.5
        aw[-1] *= 0.5
        grids = np.meshgrid(*([ax] * self.dimension), indexing="ij")
        nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
        w = aw.copy()
        for _ in range(self.dimension - 1):
            w = np.multiply.outer(w, aw).reshape(-1)
        object.__setattr__(self, "axis", ax)
        object.__setattr__(self, "axis_weights", aw)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)

    @property
    def num_nodes(self) -> int:
        return self.points_per_axis ** self.dimension

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def bracket(self, q: float = 1.0) -> np.ndarray:
        """<v>^q = (1 + |v|^2)^{q/2} on the nodes."""
        return (1.0 + np.sum(self.nodes ** 2, axis=1)) ** (0.5 * q)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class SphereQuadrature:
    """Unit-sphere quadrature: product Gauss(cos th) x trapezoid(phi) for N=3,
    uniform circle points for N=2.  Weights sum to |S^{N-1}|."""

    dimension: int
    n_polar: int = 16
    n_azimuth: int = 32
    directions: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension == 2:
            k = np.arange(self.n_azimuth)
            ang = 2.0 * math.pi * k / self.n_azimuth
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            w = np.full(self.n_azimuth, 2.0 * math.pi / self.n_azimuth)
        elif self.dimension == 3:
            t, tw = np.polynomial.legendre.leggauss(self.n_polar)
            k = np.arange(self.n_azimuth)
            ph = 2.0 * math.pi * k / self.n_azimuth
            st = np.sqrt(1.0 - t ** 2)
            dirs = np.empty((self.n_polar * self.n_azimuth, 3))
            w = np.empty(self.n_polar * self.n_azimuth)
            for i in range(self.n_polar):
                sl = slice(i * self.n_azimuth, (i + 1) * self.n_azimuth)
                dirs[sl, 0] = st[i] * np.cos(ph)
                dirs[sl, 1] = st[i] * np.sin(ph)
                dirs[sl, 2] = t[i]
                w[sl] = tw[i] * 2.0 * math.pi / self.n_azimuth
        else:
            raise ValueError("sphere quadrature implemented for N = 2 and 3")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "weights", w)

    @property
    def num_points(self) -> int:
        return len(self.weights)

    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def first_moment(self) -> np.ndarray:
        return self.weights @ self.directions


class WeightFunction:
    """Velocity-space weights: Gaussian equilibrium, stretched exponential, or
    polynomial bracket <v>^q."""

    def __init__(self, kind: str, a: float = 0.0, s: float = 0.0, q: float = 0.0):
        if kind not in ("maxwellian", "stretched", "bracket"):
            raise ValueError(f"unknown weight kind {kind!r}")
        if kind == "stretched":
            if a <= 0.0:
                raise ValueError("stretched weight needs a > 0")
            if not (0.0 < s < 2.0):
                raise ValueError("stretched weight needs 0 < s < 2")
        self.kind = kind
        self.a = float(a)
        self.s = float(s)
        self.q = float(q)

    @classmethod
    def maxwellian(cls) -> "WeightFunction":
        return cls("maxwellian")

    @classmethod
    def stretched(cls, a: float, s: float, gamma: Optional[float] = None) -> "WeightFunction":
        if gamma is not None and not (0.0 < s < 0.5 * gamma):
            raise ValueError(
                f"stretched exponent s={s} must lie in (0, gamma/2) = (0, {0.5 * gamma})"
            )
        return cls("stretched", a=a, s=s)

    @classmethod
    def bracket(cls, q: float) -> "WeightFunction":
        return cls("bracket", q=q)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        sq = np.sum(v * v, axis=-1) if v.ndim > 1 else np.sum(v * v)
        if self.kind == "maxwellian":
            return np.exp(-sq)
        if self.kind == "stretched":
            return np.exp(-self.a * sq ** (0.5 * self.s))
        return (1.0 + sq) ** (0.5 * self.q)

    def on_grid(self, grid: VelocityGrid) -> np.ndarray:
        return self(grid.nodes)

    def __repr__(self):
        if self.kind == "stretched":
            return f"WeightFunction(stretched, a={self.a}, s={self.s})"
        if self.kind == "bracket":
            return f"WeightFunction(bracket, q={self.q})"
        return "WeightFunction(maxwellian)"


@dataclass
class DistributionField:
    """Node values of a distribution (or signed perturbation) on a grid."""

    grid: VelocityGrid
    values: np.ndarray
    weight_convention: str = "plain"  # plain | relative-to-M | relative-to-m
    physical: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.num_nodes,):
            raise ValueError("field values must be one value per grid node")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.physical:
            if np.any(self.values < 0.0):
                raise ValueError("physical distribution must be nonnegative")
            if self.grid.integrate(self.values) <= 0.0:
                raise ValueError("physical distribution must carry positive mass")

    def copy(self) -> "DistributionField":
        return DistributionField(
            self.grid, self.values.copy(), self.weight_convention, self.physical
        )

    def mass(self) -> float:
        return self.grid.integrate(self.values)


def maxwellian_values(grid: VelocityGrid) -> np.ndarray:
    return np.exp(-np.sum(grid.nodes ** 2, axis=1))


def maxwellian_field(grid: VelocityGrid) -> DistributionField:
    """Equilibrium e^{-|v|^2}: mass pi^{N/2}, zero mean velocity, temperature 1/2."""
    return DistributionField(grid, maxwellian_values(grid), physical=True)


def moments(f: DistributionField) -> dict:
    """Mass, momentum, kinetic energy and temperature of a physical field."""
    g = f.grid
    w = g.weights
    rho = float(np.dot(w, f.values))
    if rho <= 0.0:
        raise ValueError("moments need a field with positive mass")
    mom = (w * f.values) @ g.nodes
    u = mom / rho
    centered = g.nodes - u[None, :]
    sq = np.sum(centered ** 2, axis=1)
    temp = float(np.dot(w * f.values, sq)) / (g.dimension * rho)
    energy = 0.5 * float(np.dot(w * f.values, np.sum(g.nodes ** 2, axis=1)))
    return {
        "mass": rho,
        "momentum": mom,
        "mean_velocity": u,
        "energy": energy,
        "temperature": temp,
    }


def weighted_norm(f: DistributionField, w: WeightFunction, p: float = 1.0) -> float:
    """Discrete L^p(w) norm: weight inside the integral, power p on |f|.

    p = inf uses the sup convention sup |f| w.
    """
    wv = w.on_grid(f.grid)
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.values) * wv))
    if p not in (1, 2, 1.0, 2.0):
        raise ValueError("supported exponents: 1, 2, inf")
    integ = f.grid.integrate(np.abs(f.values) ** p * wv)
    return float(integ ** (1.0 / p))


def h_functional(f: DistributionField, floor: float = 1e-300) -> float:
    """H(f) = int f log f with the 0 log 0 = 0 convention; rejects negatives."""
    vals = f.values
    if np.any(vals < 0.0):
        raise ValueError("H functional needs a nonnegative field")
    safe = np.where(vals > floor, vals, 1.0)
    return f.grid.integrate(np.where(vals > floor, vals * np.log(safe), 0.0))


# --- snapshot formats ------------------------------------------------------

_AXES = ("vx", "vy", "vz")


def save_field_csv(path, f: DistributionField) -> None:
    n = f.grid.dimension
    header = ",".join(_AXES[:n] + ("f",))
    data = np.column_stack([f.grid.nodes, f.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="")


def load_field_csv(path, grid: VelocityGrid) -> DistributionField:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    nodes = data[:, : grid.dimension]
    if not np.allclose(nodes, grid.nodes, atol=1e-12):
        raise ValueError("snapshot nodes do not match the grid")
    return DistributionField(grid, data[:, grid.dimension])


def save_field_binary(path, f: DistributionField) -> None:
    """Raw little-endian doubles plus a JSON sidecar with the grid metadata."""
    arr = np.asarray(f.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())
    meta = {
        "dimension": f.grid.dimension,
        "extent": f.grid.extent,
        "points_per_axis": f.grid.points_per_axis,
        "dtype": "<f8",
        "order": "C",
        "weight_convention": f.weight_convention,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_field_binary(path) -> DistributionField:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    grid = VelocityGrid(meta["dimension"], meta["extent"], meta["points_per_axis"])
    with open(path, "rb") as fh:
        vals = np.frombuffer(fh.read(), dtype="<f8")
    return DistributionField(
        grid, vals.astype(float), weight_convention=meta.get("weight_convention", "plain")
    )
