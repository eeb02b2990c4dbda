"""Every measurable quantity the stability theory and the figures reference.

A DiagnosticsRecord collects, per output step: total mass, L1 pressure, sup
norms, the discrete total variation, the L1 time-derivative rate, the
integrand of the squared-gradient estimate, the second-difference floor
min_i (d2p_i + G_i), the pointwise stiff-limit residual |p*(d2p + G)| summed
in L1, and (on request) a family of Lq face-gradient norms.  The space-time
L1 error and the stiff-limit residual aggregates (sup and time integral) are
the quantities the accuracy and limit-consistency gates assert on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from .core import (
    Grid1D,
    Grid2D,
    GrowthModel,
    PressureLaw,
    SimState,
    face_gradient,
    growth_eval,
    pressure_from_density,
    second_difference,
)
from .scheme2d import gradient_lq_norm, second_difference_2d

__all__ = [
    "DiagnosticsRecord",
    "record",
    "l1_distance",
    "l1_error_spacetime",
    "complementarity_sup",
    "complementarity_integral",
]

GridLike = Union[Grid1D, Grid2D]


@dataclass
class DiagnosticsRecord:
    """Scalar diagnostics of one state (dt_l1 needs the previous state)."""

    t: float
    mass: float
    l1_pressure: float
    linf_density: float
    linf_pressure: float
    bv: float
    dt_l1: Optional[float]
    grad_l2_sq: float
    ab_min: float
    comp_residual: float
    lq_grad_norms: Dict[float, float] = field(default_factory=dict)


def _growth_values(state: SimState, p: np.ndarray, growth: GrowthModel) -> np.ndarray:
    if getattr(growth, "pressure_fed", True):
        return growth_eval(growth, p)
    if state.c is None:
        raise ValueError("nutrient-fed growth needs a nutrient field on the state")
    return growth_eval(growth, state.c)


def record(
    state: SimState,
    prev_state: Optional[SimState],
    law: PressureLaw,
    growth: GrowthModel,
    grid: GridLike,
    lq_exponents: Optional[Sequence[float]] = None,
) -> DiagnosticsRecord:
    """Compute every scalar diagnostic of a state; grids of both states must match."""
    n = np.asarray(state.n, dtype=float)
    p = pressure_from_density(n, law)
    two_d = isinstance(grid, Grid2D)
    dx = grid.dx
    measure = dx * dx if two_d else dx

    if prev_state is not None:
        if np.shape(prev_state.n) != np.shape(n):
            raise ValueError("states do not share a grid")
        dt = state.t - prev_state.t
        dt_l1 = float(measure * np.sum(np.abs(n - prev_state.n)) / dt) if dt > 0 else None
    else:
        dt_l1 = None

    g = _growth_values(state, p, growth)
    if two_d:
        qx = np.diff(p, axis=1) / dx
        qy = np.diff(p, axis=0) / dx
        grad_l2_sq = float(measure * (np.sum(qx**2) + np.sum(qy**2)))
        bv = float(dx * (np.sum(np.abs(np.diff(n, axis=1))) + np.sum(np.abs(np.diff(n, axis=0)))))
        w = second_difference_2d(p, grid) + g
        ab_min = float(np.min(w[1:-1, 1:-1]))
        comp = float(measure * np.sum(np.abs(p * w)))
    else:
        q = face_gradient(p, grid)
        grad_l2_sq = float(dx * np.sum(q[1:-1] ** 2))
        bv = float(dx * np.sum(np.abs(np.diff(n))))
        w = second_difference(p, grid) + g
        ab_min = float(np.min(w[1:-1]))
        comp = float(dx * np.sum(np.abs(p * w)))

    lq: Dict[float, float] = {}
    if lq_exponents is not None:
        for ex in lq_exponents:
            if two_d:
                lq[ex] = gradient_lq_norm(p, grid, ex)
            else:
                q_int = face_gradient(p, grid)[1:-1]
                if np.isinf(ex):
                    lq[ex] = float(np.max(np.abs(q_int))) if q_int.size else 0.0
                else:
                    lq[ex] = float((dx * np.sum(np.abs(q_int) ** ex)) ** (1.0 / ex))

    return DiagnosticsRecord(
        t=state.t,
        mass=float(measure * np.sum(n)),
        l1_pressure=float(measure * np.sum(np.abs(p))),
        linf_density=float(np.max(np.abs(n))),
        linf_pressure=float(np.max(np.abs(p))),
        bv=bv,
        dt_l1=dt_l1,
        grad_l2_sq=grad_l2_sq,
        ab_min=ab_min,
        comp_residual=comp,
        lq_grad_norms=lq,
    )


def _measure(grid: GridLike) -> float:
    return grid.dx * grid.dx if isinstance(grid, Grid2D) else grid.dx


def l1_distance(
    history_a: Sequence[np.ndarray],
    history_b: Sequence[np.ndarray],
    grid: GridLike,
    dt: float,
) -> float:
    """Space-time L1 distance of two equal-shape field histories."""
    if len(history_a) != len(history_b):
        raise ValueError("histories differ in length")
    cell = _measure(grid)
    total = 0.0
    for a, b in zip(history_a, history_b):
        total += float(np.sum(np.abs(np.asarray(a) - np.asarray(b))))
    return cell * dt * total


def l1_error_spacetime(
    history: Sequence[np.ndarray],
    exact: Callable[[np.ndarray, float], np.ndarray],
    grid: GridLike,
    dt: float,
    t_start: float = 0.0,
) -> float:
    """err1 = sum_{i,j} |N_i^j - n(x_i, t_j)| * dx * dt over the whole history.

    ``exact(x_nodes, t)`` is called with the full node array per time level.
    """
    if isinstance(grid, Grid2D):
        raise NotImplementedError("space-time L1 error harness is one-dimensional")
    xs = grid.nodes
    sampled = [np.asarray(exact(xs, t_start + j * dt), dtype=float) for j in range(len(history))]
    return l1_distance(history, sampled, grid, dt)


def _comp_values(
    history: Sequence[SimState],
    law: PressureLaw,
    growth: GrowthModel,
    grid: GridLike,
) -> np.ndarray:
    vals = np.empty(len(history))
    for j, state in enumerate(history):
        p = pressure_from_density(state.n, law)
        g = _growth_values(state, p, growth)
        if isinstance(grid, Grid2D):
            w = second_difference_2d(p, grid) + g
            vals[j] = grid.dx**2 * np.sum(np.abs(p * w))
        else:
            w = second_difference(p, grid) + g
            vals[j] = grid.dx * np.sum(np.abs(p * w))
    return vals


def complementarity_sup(
    history: Sequence[SimState],
    law: PressureLaw,
    growth: GrowthModel,
    grid: GridLike,
    dt: float,
) -> float:
    """sup over the history of the L1 stiff-limit residual dx*sum|p(d2p + G)|."""
    vals = _comp_values(history, law, growth, grid)
    return float(np.max(vals)) if vals.size else 0.0


def complementarity_integral(
    history: Sequence[SimState],
    law: PressureLaw,
    growth: GrowthModel,
    grid: GridLike,
    dt: float,
) -> float:
    """Time integral (right Riemann sum past the initial state) of the residual."""
    vals = _comp_values(history, law, growth, grid)
    if vals.size <= 1:
        return 0.0
    return float(dt * np.sum(vals[1:]))
