"""Method-of-lines form of the upwind scheme plus a forward-Euler marcher.

The semi-discrete system is

    dn_i/dt = (n_{i+1/2} q_{i+1/2} - n_{i-1/2} q_{i-1/2}) / dx + n_i G_i,

with q_{i+1/2} = (p_{i+1} - p_i)/dx and donor-cell face densities.  The
explicit marcher is deliberately first order with a conservative step budget
dt <= c_cfl * dx**2 / (gamma * kappa * max(n)**gamma): it exists as a
brute-force cross-check for the implicit solvers and to track the
second-difference floor, not to be fast.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    Grid1D,
    GrowthModel,
    PressureLaw,
    SimState,
    StabilityError,
    density_cap,
    face_gradient,
    growth_eval,
    pressure_from_density,
    upwind_face_values,
)

__all__ = [
    "RhsWorkspace",
    "rhs",
    "stability_budget",
    "step_explicit",
    "advance_explicit",
    "ab_monitor",
]

# Rounding guards for the explicit step: values this far outside [0, n_H] are
# attributed to roundoff and clipped; anything worse is a stability failure.
NEGATIVE_TOL = 1e-14
CAP_TOL = 1e-12


@dataclass
class RhsWorkspace:
    """Preallocated face/node scratch for repeated right-hand-side evaluations."""

    q: np.ndarray
    n_half: np.ndarray
    rhs: np.ndarray

    @classmethod
    def for_grid(cls, grid: Grid1D) -> "RhsWorkspace":
        faces = grid.n_nodes + 1
        return cls(np.zeros(faces), np.zeros(faces), np.zeros(grid.n_nodes))


def _growth_values(state: SimState, p: np.ndarray, growth: GrowthModel) -> np.ndarray:
    if getattr(growth, "pressure_fed", True):
        return growth_eval(growth, p)
    if state.c is None:
        raise ValueError("nutrient-fed growth needs a nutrient field on the state")
    return growth_eval(growth, state.c)


def rhs(
    state: SimState,
    law: PressureLaw,
    growth: GrowthModel,
    grid: Grid1D,
    work: Optional[RhsWorkspace] = None,
) -> np.ndarray:
    """Full right-hand side (transport + reaction) at the state's density."""
    n = state.n
    p = pressure_from_density(n, law)
    q = face_gradient(p, grid)
    if work is None:
        work = RhsWorkspace.for_grid(grid)
    work.q[:] = q
    work.n_half[0] = 0.0
    work.n_half[-1] = 0.0
    work.n_half[1:-1] = upwind_face_values(n, q[1:-1])
    flux = work.n_half * q
    work.rhs[:] = np.diff(flux) / grid.dx
    work.rhs += n * _growth_values(state, p, growth)
    return work.rhs.copy()


def stability_budget(n: np.ndarray, law: PressureLaw, grid: Grid1D, c_cfl: float = 0.2) -> float:
    """Diffusion-limited explicit step size; the degenerate term is the binding one."""
    scale = law.gamma * law.kappa * float(np.max(n)) ** law.gamma
    if scale <= 0.0:
        return np.inf
    return c_cfl * grid.dx**2 / scale


def step_explicit(
    state: SimState,
    dt: float,
    law: PressureLaw,
    growth: GrowthModel,
    grid: Grid1D,
    work: Optional[RhsWorkspace] = None,
) -> SimState:
    """One forward-Euler step; rejects steps that break positivity or the cap."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n_new = state.n + dt * rhs(state, law, growth, grid, work)
    low = float(np.min(n_new))
    if low < -NEGATIVE_TOL:
        raise StabilityError(f"density {low:g} below -{NEGATIVE_TOL:g}; dt too large")
    if low < 0.0:
        np.clip(n_new, 0.0, None, out=n_new)
    cap = density_cap(law, growth)
    if cap is not None:
        high = float(np.max(n_new))
        if high > cap + CAP_TOL:
            raise StabilityError(f"density {high:g} above n_H={cap:g} by more than {CAP_TOL:g}")
    return SimState(state.t + dt, n_new, c=state.c, n_d=state.n_d)


def advance_explicit(
    state: SimState,
    t_end: float,
    law: PressureLaw,
    growth: GrowthModel,
    grid: Grid1D,
    dt: Optional[float] = None,
    c_cfl: float = 0.2,
    hook: Optional[Callable[[int, SimState], None]] = None,
) -> SimState:
    """March to t_end with fixed dt, or re-budgeted steps when dt is None."""
    work = RhsWorkspace.for_grid(grid)
    k = 0
    while state.t < t_end - 1e-12:
        step = dt if dt is not None else stability_budget(state.n, law, grid, c_cfl)
        step = min(step, t_end - state.t)
        state = step_explicit(state, step, law, growth, grid, work)
        k += 1
        if hook is not None:
            hook(k, state)
    return state


def ab_monitor(state: SimState, law: PressureLaw, growth: GrowthModel, grid: Grid1D) -> float:
    """min over interior nodes of w_i = d2p_i + G_i, the second-difference floor."""
    p = pressure_from_density(state.n, law)
    w = np.diff(face_gradient(p, grid)) / grid.dx
    w += _growth_values(state, p, growth)
    return float(np.min(w[1:-1]))
