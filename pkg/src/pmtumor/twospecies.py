"""Proliferating/necrotic two-species system driven by total-density pressure.

Both species move down the gradient of the shared pressure p = kappa*(n_P +
n_D)**gamma; proliferating cells react at rate G(c) and feed the necrotic
species at the death rate |G(c)|_- = max(-G, 0):

    dn_P/dt - d/dx(n_P dp/dx) = n_P G(c),
    dn_D/dt - d/dx(n_D dp/dx) = n_P |G(c)|_-.

One implicit step solves the stacked nonlinear system for both species at
once (lagging the pressure breaks the sup bound), with the nutrient solved
once per step from the start-of-step total density and frozen.  Where G < 0
the two sources cancel and the step conserves total mass exactly, up to the
solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .core import (
    Grid1D,
    GrowthModel,
    PressureLaw,
    SolverError,
    growth_eval,
)
from .implicit1d import ImplicitStepParams, check_dt_bound
from .nutrient import InVitro, InVivo, NutrientModel, solve_vitro, solve_vivo

__all__ = ["TwoSpeciesState", "step_twospecies", "advance_twospecies", "rhs_twospecies"]


@dataclass
class TwoSpeciesState:
    """Proliferating density, necrotic density, and the nutrient they see."""

    t: float
    n_p: np.ndarray
    n_d: np.ndarray
    c: Optional[np.ndarray] = None


def _solve_nutrient(n_total: np.ndarray, model: NutrientModel, grid: Grid1D) -> np.ndarray:
    if isinstance(model, InVitro):
        return solve_vitro(n_total, model, grid)
    if isinstance(model, InVivo):
        return solve_vivo(n_total, model, grid)
    raise TypeError(f"unknown nutrient model {type(model)!r}")


def _species_fluxes(vp, vd, law: PressureLaw, dx: float):
    """Per-face fluxes of both species through the shared pressure gradient.

    Returns the flux pair (bp, bd), the face gradient q, the donor values,
    and the node weights wq = d(kappa n^gamma)/dn / dx used by the Jacobian.
    """
    ntot = vp + vd
    p = law.kappa * ntot**law.gamma
    q = np.diff(p) / dx
    wq = law.gamma * law.kappa * ntot ** (law.gamma - 1.0) / dx
    pos = q > 0.0
    neg = q < 0.0
    up_p = np.where(pos, vp[1:], np.where(neg, vp[:-1], 0.0))
    up_d = np.where(pos, vd[1:], np.where(neg, vd[:-1], 0.0))
    return up_p * q, up_d * q, q, up_p, up_d, wq


def rhs_twospecies(
    n_p: np.ndarray,
    n_d: np.ndarray,
    g: np.ndarray,
    law: PressureLaw,
    grid: Grid1D,
):
    """Semi-discrete right-hand sides of both species at frozen growth rates.

    This is the fine-step explicit oracle for the coupled implicit step.
    """
    bp, bd, _, _, _, _ = _species_fluxes(n_p, n_d, law, grid.dx)
    size = n_p.size
    fp = np.zeros(size + 1)
    fd = np.zeros(size + 1)
    fp[1:-1] = bp
    fd[1:-1] = bd
    gneg = np.maximum(-g, 0.0)
    dp = np.diff(fp) / grid.dx + n_p * g
    dd = np.diff(fd) / grid.dx + n_p * gneg
    return dp, dd


def _stacked_system(vp, vd, prev_p, prev_d, g, gneg, params, law, grid):
    """Residual and banded Jacobian (interleaved P, D unknowns, bandwidth 3)."""
    size = vp.size
    dx = grid.dx
    nu = params.dt / dx
    bp, bd, q, up_p, up_d, wq = _species_fluxes(vp, vd, law, dx)

    fp = np.zeros(size + 1)
    fd = np.zeros(size + 1)
    fp[1:-1] = bp
    fd[1:-1] = bd
    F = np.empty(2 * size)
    F[0::2] = (1.0 - params.dt * g) * vp - nu * np.diff(fp) - prev_p
    F[1::2] = vd - nu * np.diff(fd) - params.dt * gneg * vp - prev_d

    # per-face partial blocks, padded to faces 0..size (walls carry zeros)
    pos = q > 0.0
    neg = q < 0.0
    own_l = np.where(neg, q, 0.0)  # d(flux)/d(own species, left node), upwind pick
    own_r = np.where(pos, q, 0.0)
    pad = lambda a: np.concatenate(([0.0], a, [0.0]))
    own_l, own_r = pad(own_l), pad(own_r)
    anyp_l = pad(-up_p * wq[:-1])  # through the shared gradient: both unknowns at the node
    anyp_r = pad(up_p * wq[1:])
    anyd_l = pad(-up_d * wq[:-1])
    anyd_r = pad(up_d * wq[1:])

    rface = slice(1, size + 1)  # face i+1/2 of node i
    lface = slice(0, size)  # face i-1/2 of node i

    ab = np.zeros((7, 2 * size))  # banded storage, u = l = 3

    def put(offset, rows, vals):
        # ab[u + i - j, j] with u = 3; rows are row indices i, columns i + offset
        cols = rows + offset
        ok = (cols >= 0) & (cols < 2 * size)
        ab[3 - offset, cols[ok]] = vals[ok]

    rows_p = np.arange(0, 2 * size, 2)
    rows_d = rows_p + 1

    diag_p = (1.0 - params.dt * g) - nu * (
        (own_l[rface] + anyp_l[rface]) - (own_r[lface] + anyp_r[lface])
    )
    put(0, rows_p, diag_p)
    put(1, rows_p, -nu * (anyp_l[rface] - anyp_r[lface]))  # dF_P/dD_i
    put(2, rows_p, -nu * (own_r[rface] + anyp_r[rface]))  # dF_P/dP_{i+1}
    put(3, rows_p, -nu * anyp_r[rface])  # dF_P/dD_{i+1}
    put(-2, rows_p, nu * (own_l[lface] + anyp_l[lface]))  # dF_P/dP_{i-1}
    put(-1, rows_p, nu * anyp_l[lface])  # dF_P/dD_{i-1}

    diag_d = 1.0 - nu * ((own_l[rface] + anyd_l[rface]) - (own_r[lface] + anyd_r[lface]))
    put(0, rows_d, diag_d)
    put(-1, rows_d, -params.dt * gneg - nu * (anyd_l[rface] - anyd_r[lface]))  # dF_D/dP_i
    put(1, rows_d, -nu * (own_r[rface] + anyd_r[rface]))  # dF_D/dP_{i+1}
    put(2, rows_d, -nu * anyd_r[rface])  # dF_D/dD_{i+1}
    put(-3, rows_d, nu * (own_l[lface] + anyd_l[lface]))  # dF_D/dP_{i-1}
    put(-2, rows_d, nu * anyd_l[lface])  # dF_D/dD_{i-1}

    return F, ab


def step_twospecies(
    state: TwoSpeciesState,
    params: ImplicitStepParams,
    law: PressureLaw,
    model: NutrientModel,
    growth: GrowthModel,
    grid: Grid1D,
) -> TwoSpeciesState:
    """One coupled implicit step of the two-species system.

    The nutrient is solved from the start-of-step total density and frozen;
    both species then advance together under the shared end-of-step pressure.
    """
    if getattr(growth, "pressure_fed", True):
        raise ValueError("the two-species system needs a nutrient-fed growth rate")
    n_total = state.n_p + state.n_d
    c = _solve_nutrient(n_total, model, grid)
    g = growth_eval(growth, c)
    gneg = np.maximum(-g, 0.0)
    check_dt_bound(params.dt, g)

    vp = state.n_p.copy()
    vd = state.n_d.copy()
    F, ab = _stacked_system(vp, vd, state.n_p, state.n_d, g, gneg, params, law, grid)
    fnorm = float(np.max(np.abs(F)))
    for _ in range(params.newton_max_iter):
        if fnorm <= params.newton_tol:
            break
        delta = solve_banded((3, 3), ab, -F)
        lam = 1.0
        while True:
            tp = np.maximum(vp + lam * delta[0::2], 0.0)
            td = np.maximum(vd + lam * delta[1::2], 0.0)
            F_t, ab_t = _stacked_system(tp, td, state.n_p, state.n_d, g, gneg, params, law, grid)
            fnorm_t = float(np.max(np.abs(F_t)))
            if fnorm_t <= (1.0 - 1e-4 * lam) * fnorm or fnorm_t <= params.newton_tol:
                break
            lam *= 0.5
            if lam < 1e-10:
                raise SolverError("two-species Newton stalled", iterate=(vp, vd))
        vp, vd, F, ab, fnorm = tp, td, F_t, ab_t, fnorm_t
    else:
        if fnorm > params.newton_tol:
            raise SolverError(
                f"two-species Newton did not reach tol {params.newton_tol:g} "
                f"(residual {fnorm:g})",
                iterate=(vp, vd),
            )
    return TwoSpeciesState(state.t + params.dt, vp, vd, c)


def advance_twospecies(
    state: TwoSpeciesState,
    t_end: float,
    params: ImplicitStepParams,
    law: PressureLaw,
    model: NutrientModel,
    growth: GrowthModel,
    grid: Grid1D,
    hook: Optional[Callable[[int, TwoSpeciesState, TwoSpeciesState], None]] = None,
) -> TwoSpeciesState:
    """Repeated coupled steps to t_end (final step shortened if need be)."""
    k = 0
    while state.t < t_end - 1e-12:
        dt_k = min(params.dt, t_end - state.t)
        step_params = params if dt_k == params.dt else ImplicitStepParams(
            dt=dt_k,
            newton_tol=params.newton_tol,
            newton_max_iter=params.newton_max_iter,
            monotone_pseudo_dt=params.monotone_pseudo_dt,
            monotone_tol=params.monotone_tol,
            monotone_max_steps=params.monotone_max_steps,
        )
        new_state = step_twospecies(state, step_params, law, model, growth, grid)
        k += 1
        if hook is not None:
            hook(k, new_state, state)
        state = new_state
    return state
