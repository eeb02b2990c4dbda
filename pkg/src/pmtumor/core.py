"""Shared building blocks: uniform grids, the density/pressure law, growth rates.

The model evolves a nonnegative cell density n(x, t) through degenerate
diffusion down pressure gradients plus a reaction term,

    dn/dt - div(n grad p) = n * G,      p = kappa * n**gamma,

discretized on a symmetric uniform grid with nodes x_i = i*dx, i = -m..m.
Every scheme in the package shares the stencils defined here: face pressure
gradients q_{i+1/2} = (p_{i+1} - p_i)/dx, upwind face densities, and the
three-point second difference.  The two wall faces carry zero flux (the
discrete Neumann closure), so flux sums telescope exactly and mass is
conserved to rounding whenever G = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "SolverError",
    "StabilityError",
    "Grid1D",
    "Grid2D",
    "Field",
    "as_field",
    "PressureLaw",
    "LinearPressure",
    "Constant",
    "NutrientLinear",
    "NutrientPiecewise",
    "PressureGeneric",
    "GrowthModel",
    "SimState",
    "pressure_from_density",
    "upwind_face_value",
    "upwind_face_values",
    "face_gradient",
    "second_difference",
    "growth_eval",
    "growth_sup",
    "density_cap",
]


class SolverError(RuntimeError):
    """A nonlinear solver failed to converge; carries the last iterate."""

    def __init__(self, message: str, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class StabilityError(RuntimeError):
    """An explicit step left the stable region (negative or overshooting values)."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform symmetric grid with nodes x_i = x_min + (i + m)*dx, i = -m..m.

    ``m`` counts nodes per side, so there are 2m + 1 nodes and
    dx = (x_max - x_min)/(2m).
    """

    x_min: float
    x_max: float
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("grid needs m >= 1")
        if not self.x_max > self.x_min:
            raise ValueError(f"empty extent [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (2 * self.m)

    @property
    def n_nodes(self) -> int:
        return 2 * self.m + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_nodes) * self.dx

    @classmethod
    def symmetric(cls, half_width: float, dx: float) -> "Grid1D":
        """Grid on [-half_width, half_width]; half_width must be a multiple of dx."""
        m = int(round(half_width / dx))
        if m < 1 or abs(m * dx - half_width) > 1e-9 * max(1.0, half_width):
            raise ValueError(f"half width {half_width} is not a multiple of dx {dx}")
        return cls(-half_width, half_width, m)


@dataclass(frozen=True)
class Grid2D:
    """Square-celled grid on [-x_max, x_max] x [-y_max, y_max], dx = dy."""

    x_max: float
    y_max: float
    mx: int
    my: int

    def __post_init__(self):
        if self.mx < 1 or self.my < 1:
            raise ValueError("grid needs mx, my >= 1")
        dx = self.x_max / self.mx
        dy = self.y_max / self.my
        if abs(dx - dy) > 1e-12 * max(dx, dy):
            raise ValueError(f"cells must be square, got dx={dx}, dy={dy}")

    @property
    def dx(self) -> float:
        return self.x_max / self.mx

    @property
    def nx(self) -> int:
        return 2 * self.mx + 1

    @property
    def ny(self) -> int:
        return 2 * self.my + 1

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def xs(self) -> np.ndarray:
        return -self.x_max + np.arange(self.nx) * self.dx

    @property
    def ys(self) -> np.ndarray:
        return -self.y_max + np.arange(self.ny) * self.dx

    @classmethod
    def square(cls, half_width: float, dx: float) -> "Grid2D":
        m = int(round(half_width / dx))
        if m < 1 or abs(m * dx - half_width) > 1e-9 * max(1.0, half_width):
            raise ValueError(f"half width {half_width} is not a multiple of dx {dx}")
        return cls(half_width, half_width, m, m)


Field = np.ndarray


def as_field(values, grid) -> np.ndarray:
    """Validate node values against a grid: right shape, finite entries."""
    arr = np.asarray(values, dtype=float)
    if isinstance(grid, Grid2D):
        want = (grid.ny, grid.nx)
        if arr.shape != want:
            raise ValueError(f"field shape {arr.shape} does not match grid {want}")
    else:
        if arr.shape != (grid.n_nodes,):
            raise ValueError(f"field length {arr.size} does not match grid {grid.n_nodes}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains non-finite values")
    return arr


@dataclass(frozen=True)
class PressureLaw:
    """p = kappa * n**gamma.

    gamma = 1 is admitted so the heat-like limit can be monitored; the
    schemes themselves are exercised with gamma > 1.  kappa = 1 is the model
    normalization; kappa = (gamma+1)/gamma turns the density equation into
    dn/dt = (n**(gamma+1))_xx for the self-similar accuracy test.
    """

    gamma: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    def pressure(self, n) -> np.ndarray:
        return pressure_from_density(n, self)

    def dpressure_dn(self, n) -> np.ndarray:
        return self.gamma * self.kappa * np.asarray(n, dtype=float) ** (self.gamma - 1.0)

    def density_at(self, p) -> np.ndarray:
        """Inverse law n = (p/kappa)**(1/gamma)."""
        return (np.asarray(p, dtype=float) / self.kappa) ** (1.0 / self.gamma)


def pressure_from_density(n, law: PressureLaw) -> np.ndarray:
    """Elementwise law of state; rejects negative densities by index."""
    arr = np.asarray(n, dtype=float)
    if np.any(arr < 0.0):
        idx = int(np.argmin(arr))
        raise ValueError(f"negative density {arr.flat[idx]:g} at flat index {idx}")
    return law.kappa * arr**law.gamma


# --- growth-rate variants ---------------------------------------------------


@dataclass(frozen=True)
class LinearPressure:
    """G(p) = alpha*(p_h - p): strictly decreasing, zero at the homeostatic pressure."""

    alpha: float
    p_h: float
    pressure_fed = True

    def __post_init__(self):
        if self.alpha <= 0 or self.p_h <= 0:
            raise ValueError("LinearPressure needs alpha > 0 and p_h > 0")

    def _eval(self, v):
        return self.alpha * (self.p_h - v)

    def _prime(self, v):
        return np.full_like(np.asarray(v, dtype=float), -self.alpha)

    def sup(self) -> float:
        return self.alpha * self.p_h


@dataclass(frozen=True)
class Constant:
    """Constant growth rate; g0 = 0 gives the source-free porous medium flow."""

    g0: float
    pressure_fed = True

    def _eval(self, v):
        return np.full_like(np.asarray(v, dtype=float), self.g0)

    def _prime(self, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def sup(self) -> float:
        return self.g0


@dataclass(frozen=True)
class NutrientLinear:
    """G(c) = c."""

    pressure_fed = False

    def _eval(self, v):
        return np.asarray(v, dtype=float) + 0.0


@dataclass(frozen=True)
class NutrientPiecewise:
    """Two-level rate: g_low below the nutrient threshold, g_high at or above it."""

    g_low: float
    g_high: float
    c_threshold: float
    pressure_fed = False

    def _eval(self, v):
        return np.where(np.asarray(v, dtype=float) < self.c_threshold, self.g_low, self.g_high)


@dataclass(frozen=True)
class PressureGeneric:
    """Closure-backed pressure growth with recorded G(0) and a monotonicity pledge.

    ``decreasing`` certifies G' <= 0 so the solvers may use g_at_zero as the
    supremum; ``derivative`` is used by Newton when given, otherwise a secant.
    """

    func: Callable[[np.ndarray], np.ndarray]
    g_at_zero: float
    decreasing: bool = True
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    pressure_fed = True

    def _eval(self, v):
        return np.asarray(self.func(np.asarray(v, dtype=float)), dtype=float)

    def _prime(self, v):
        v = np.asarray(v, dtype=float)
        if self.derivative is not None:
            return np.asarray(self.derivative(v), dtype=float)
        h = 1e-7 * np.maximum(1.0, np.abs(v))
        return (self._eval(v + h) - self._eval(np.maximum(v - h, 0.0))) / (
            v + h - np.maximum(v - h, 0.0)
        )

    def sup(self) -> float:
        if not self.decreasing:
            raise ValueError("no supremum certificate for a non-monotone growth table")
        return self.g_at_zero


GrowthModel = Union[LinearPressure, Constant, NutrientLinear, NutrientPiecewise, PressureGeneric]


def growth_eval(model: GrowthModel, value):
    """Growth rate at a pressure (pressure-fed variants) or nutrient level."""
    v = np.asarray(value, dtype=float)
    out = np.asarray(model._eval(v), dtype=float)
    if np.ndim(value) == 0:
        return float(out)
    return out


def growth_sup(model: GrowthModel, c_b: Optional[float] = None) -> float:
    """Largest growth rate the run can see; the implicit step needs dt < 1/sup.

    Nutrient-fed rates are maximized over the admissible range [0, c_b].
    """
    if isinstance(model, NutrientLinear):
        if c_b is None:
            raise ValueError("nutrient-fed growth needs the boundary level c_b")
        return float(c_b)
    if isinstance(model, NutrientPiecewise):
        return float(max(model.g_low, model.g_high))
    return float(model.sup())


def density_cap(law: PressureLaw, growth: GrowthModel) -> Optional[float]:
    """n_H = (p_H/kappa)**(1/gamma) when the growth has a homeostatic pressure."""
    p_h = getattr(growth, "p_h", None)
    if p_h is None:
        return None
    return float((p_h / law.kappa) ** (1.0 / law.gamma))


@dataclass
class SimState:
    """Time-stamped fields: density, optional nutrient, optional dead-cell species."""

    t: float
    n: np.ndarray
    c: Optional[np.ndarray] = None
    n_d: Optional[np.ndarray] = None


# --- elementary stencils ------------------------------------------------------


def upwind_face_value(n_left: float, n_right: float, q_face: float) -> float:
    """Donor density at a face: left for q < 0, right for q > 0, 0 at a tie.

    The tie value is immaterial (the flux n*q vanishes); returning 0 removes
    the branch ambiguity.
    """
    if q_face > 0.0:
        return n_right
    if q_face < 0.0:
        return n_left
    return 0.0


def upwind_face_values(n: np.ndarray, q_interior: np.ndarray) -> np.ndarray:
    """Vectorized donor values on the interior faces (len(n) - 1 of them)."""
    return np.where(q_interior > 0.0, n[1:], np.where(q_interior < 0.0, n[:-1], 0.0))


def face_gradient(p, grid: Grid1D) -> np.ndarray:
    """Pressure gradient on all 2m + 2 faces; the two wall faces carry 0.

    Interior face i+1/2 holds (p_{i+1} - p_i)/dx; index j of the result is the
    face between nodes j-1 and j, so node i sees faces i and i+1.
    """
    p = np.asarray(p, dtype=float)
    q = np.zeros(p.size + 1)
    q[1:-1] = np.diff(p) / grid.dx
    return q


def second_difference(p, grid: Grid1D) -> np.ndarray:
    """Three-point second difference, composed exactly from face gradients.

    Interior nodes get (p_{i+1} - 2 p_i + p_{i-1})/dx**2; wall nodes get the
    one-sided value implied by the zero-flux face.
    """
    q = face_gradient(p, grid)
    return np.diff(q) / grid.dx
