"""Fully implicit upwind step in 1D: Newton primary, monotone bracket oracle.

Each step solves, for every node,

    (1 - dt*G_i) N_i - nu*(A_{i+1/2} - A_{i-1/2}) = N_i^prev,    nu = dt/dx,

with the face flux A(U, V) = V*Q+ - U*Q-, where Q = (kappa*V**gamma -
kappa*U**gamma)/dx is the face pressure gradient and Q+/Q- its positive and
negative parts.  A is the donor density times Q, and its partial derivatives
satisfy d1 <= 0 <= d2, so the step's Jacobian is a tridiagonal M-matrix as
long as dt < 1/G(0).

Two solvers share this residual.  Newton with a projected, backtracking line
search is the fast path.  The bracketing iteration marches the pseudo-time
relaxation

    dn/dtau = N^prev - (1 - dt*G(n)) n + nu*(A_{i+1/2} - A_{i-1/2})

from a flat supersolution and from zero; the upper bracket only decreases,
the lower only increases, and both squeeze onto the unique step solution.
That makes the bracket slow but certified: it is the fallback when Newton
stalls and the oracle the tests compare Newton against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.linalg import solve_banded

from .core import (
    Grid1D,
    GrowthModel,
    PressureLaw,
    SimState,
    SolverError,
    density_cap,
    growth_eval,
    growth_sup,
    pressure_from_density,
)
from .nutrient import InVitro, InVivo, NutrientModel, solve_vitro, solve_vivo

__all__ = [
    "ImplicitStepParams",
    "FluxPair",
    "flux_A",
    "residual",
    "solve_step_newton",
    "solve_step_monotone",
    "advance",
    "check_dt_bound",
]

GrowthArg = Union[GrowthModel, np.ndarray]


@dataclass(frozen=True)
class ImplicitStepParams:
    """Step size and solver tolerances for the implicit scheme."""

    dt: float
    newton_tol: float = 1e-12
    newton_max_iter: int = 60
    monotone_pseudo_dt: Optional[float] = None  # None: adaptive stability budget
    monotone_tol: float = 1e-12
    monotone_max_steps: int = 500_000

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.newton_tol <= 0 or self.monotone_tol <= 0:
            raise ValueError("tolerances must be positive")

    def nu(self, grid: Grid1D) -> float:
        return self.dt / grid.dx


def check_dt_bound(dt: float, growth: GrowthArg, c_b: Optional[float] = None) -> None:
    """Reject steps with dt >= 1/G(0); uniqueness of the implicit step needs it."""
    if isinstance(growth, np.ndarray):
        gmax = float(np.max(growth)) if growth.size else 0.0
    else:
        gmax = growth_sup(growth, c_b)
    if gmax > 0 and dt >= 1.0 / gmax:
        raise ValueError(
            f"dt = {dt:g} violates the solvability bound dt < 1/G(0) = {1.0 / gmax:g}"
        )


@dataclass(frozen=True)
class FluxPair:
    """Face flux value with its two partial derivatives (d1 <= 0 <= d2)."""

    value: float
    partial_1: float
    partial_2: float


def _face_flux(nl, nr, pl, pr, law: PressureLaw, dx: float):
    """A, dA/dU, dA/dV on faces, vectorized over left/right node arrays.

    At a tie (Q = 0) the flux and both one-sided derivatives are 0, which
    keeps the Jacobian tridiagonal with the right signs.
    """
    q = (pr - pl) / dx
    pos = q > 0.0
    neg = q < 0.0
    gm1 = law.gamma - 1.0
    dpl = law.gamma * law.kappa * nl**gm1 / dx
    dpr = law.gamma * law.kappa * nr**gm1 / dx
    a = np.where(pos, nr * q, np.where(neg, nl * q, 0.0))
    d1 = np.where(pos, -nr * dpl, np.where(neg, q - nl * dpl, 0.0))
    d2 = np.where(pos, q + nr * dpr, np.where(neg, nl * dpr, 0.0))
    return a, d1, d2


def flux_A(U: float, V: float, law: PressureLaw, dx: float) -> FluxPair:
    """Upwind face flux A(U, V) = V*Q+ - U*Q- and its partial derivatives."""
    if U < 0 or V < 0:
        raise ValueError(f"flux arguments must be nonnegative, got ({U}, {V})")
    nl = np.asarray([float(U)])
    nr = np.asarray([float(V)])
    a, d1, d2 = _face_flux(nl, nr, law.kappa * nl**law.gamma, law.kappa * nr**law.gamma, law, dx)
    return FluxPair(float(a[0]), float(d1[0]), float(d2[0]))


def _growth_terms(growth: GrowthArg, p: np.ndarray):
    """Per-node rates and their pressure derivatives.

    ``growth`` is either a pressure-fed model or a frozen per-node rate array
    (nutrient already solved); nutrient-fed models must be frozen first.
    """
    if isinstance(growth, np.ndarray):
        return growth, None
    if not getattr(growth, "pressure_fed", True):
        raise ValueError("freeze nutrient-fed growth to a rate array before the solve")
    return growth_eval(growth, p), growth._prime(p)


def residual(
    N_next: np.ndarray,
    N_curr: np.ndarray,
    params: ImplicitStepParams,
    law: PressureLaw,
    growth: GrowthArg,
    grid: Grid1D,
) -> np.ndarray:
    """Zero exactly when N_next solves the implicit step from N_curr."""
    p = pressure_from_density(N_next, law)
    g, _ = _growth_terms(growth, p)
    a, _, _ = _face_flux(N_next[:-1], N_next[1:], p[:-1], p[1:], law, grid.dx)
    flux = np.zeros(N_next.size + 1)
    flux[1:-1] = a
    nu = params.nu(grid)
    return (1.0 - params.dt * g) * N_next - nu * np.diff(flux) - N_curr


def _newton_system(N, N_curr, params, law, growth, grid):
    """Residual and tridiagonal Jacobian bands at the current iterate."""
    p = pressure_from_density(N, law)
    g, gp = _growth_terms(growth, p)
    a, d1, d2 = _face_flux(N[:-1], N[1:], p[:-1], p[1:], law, grid.dx)
    size = N.size
    nu = params.nu(grid)

    flux = np.zeros(size + 1)
    flux[1:-1] = a
    F = (1.0 - params.dt * g) * N - nu * np.diff(flux) - N_curr

    d1p = np.zeros(size + 1)
    d2p = np.zeros(size + 1)
    d1p[1:-1] = d1
    d2p[1:-1] = d2
    diag = 1.0 - params.dt * g - nu * (d1p[1:] - d2p[:-1])
    if gp is not None:
        # d/dN_i of (1 - dt G(P_i)) N_i carries -dt G'(P_i) gamma P_i
        diag -= params.dt * gp * law.gamma * p
    lower = nu * d1p[1:-1]  # dF_i/dN_{i-1} <= 0
    upper = -nu * d2p[1:-1]  # dF_i/dN_{i+1} <= 0
    return F, lower, diag, upper


def _solve_tridiag(lower, diag, upper, rhs):
    size = diag.size
    ab = np.zeros((3, size))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs)


def solve_step_newton(
    N_curr: np.ndarray,
    params: ImplicitStepParams,
    law: PressureLaw,
    growth: GrowthArg,
    grid: Grid1D,
    N_init: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Damped Newton solve of one implicit step.

    The update is projected onto N >= 0 (the law of state needs real powers)
    and backtracks on the residual max-norm.  Raises SolverError carrying the
    last iterate so the caller can fall back to the monotone bracket.
    """
    check_dt_bound(params.dt, growth)
    N = np.array(N_init if N_init is not None else N_curr, dtype=float)
    np.clip(N, 0.0, None, out=N)

    F, lower, diag, upper = _newton_system(N, N_curr, params, law, growth, grid)
    fnorm = float(np.max(np.abs(F)))
    for _ in range(params.newton_max_iter):
        if fnorm <= params.newton_tol:
            return N
        delta = _solve_tridiag(lower, diag, upper, -F)
        lam = 1.0
        while True:
            trial = np.maximum(N + lam * delta, 0.0)
            F_t, lo_t, di_t, up_t = _newton_system(trial, N_curr, params, law, growth, grid)
            fnorm_t = float(np.max(np.abs(F_t)))
            if fnorm_t <= (1.0 - 1e-4 * lam) * fnorm or fnorm_t <= params.newton_tol:
                break
            lam *= 0.5
            if lam < 1e-10:
                raise SolverError("Newton line search stalled", iterate=N)
        N, F, lower, diag, upper, fnorm = trial, F_t, lo_t, di_t, up_t, fnorm_t
    if fnorm <= params.newton_tol:
        return N
    raise SolverError(
        f"Newton did not reach tol {params.newton_tol:g} in {params.newton_max_iter} iterations"
        f" (residual {fnorm:g})",
        iterate=N,
    )


def _pseudo_rate(b, N_curr, params, law, growth, grid):
    """Right-hand side of the bracketing relaxation and a stability bound."""
    p = pressure_from_density(b, law)
    g, gp = _growth_terms(growth, p)
    a, d1, d2 = _face_flux(b[:-1], b[1:], p[:-1], p[1:], law, grid.dx)
    size = b.size
    nu = params.nu(grid)
    flux = np.zeros(size + 1)
    flux[1:-1] = a
    rate = N_curr - (1.0 - params.dt * g) * b + nu * np.diff(flux)

    d1p = np.zeros(size + 1)
    d2p = np.zeros(size + 1)
    d1p[1:-1] = d1
    d2p[1:-1] = d2
    row = np.abs(1.0 - params.dt * g) + nu * (-d1p[1:] + d2p[:-1] + d2p[1:] - d1p[:-1])
    if gp is not None:
        row += params.dt * np.abs(gp) * law.gamma * p
    return rate, float(np.max(row))


def solve_step_monotone(
    N_curr: np.ndarray,
    params: ImplicitStepParams,
    law: PressureLaw,
    growth: GrowthArg,
    grid: Grid1D,
    monitor: Optional[Callable[[np.ndarray, np.ndarray], None]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Bracket the implicit step between a falling upper and rising lower solution.

    Returns (upper, lower) after both settle within monotone_tol of each other
    and of their pseudo-time fixed point.  ``monitor`` is called with the
    brackets after every pseudo-step (used by tests to assert ordering).

    The flat upper start is n_H when the growth has a homeostatic pressure;
    otherwise max(1, max(N)/(1 - dt*Gmax)), a flat supersolution that leaves
    the homeostatic setting and is flagged as such.
    """
    check_dt_bound(params.dt, growth)
    size = N_curr.size
    cap = density_cap(law, growth) if not isinstance(growth, np.ndarray) else None
    if cap is not None:
        top = cap
    else:
        if isinstance(growth, np.ndarray):
            gmax = float(np.max(growth)) if growth.size else 0.0
        else:
            gmax = growth_sup(growth)
        denom = 1.0 - params.dt * max(gmax, 0.0)
        top = max(1.0, float(np.max(N_curr)) / denom)
    upper = np.full(size, top)
    lower = np.zeros(size)

    for _ in range(params.monotone_max_steps):
        rate_u, bound_u = _pseudo_rate(upper, N_curr, params, law, growth, grid)
        rate_l, bound_l = _pseudo_rate(lower, N_curr, params, law, growth, grid)
        if params.monotone_pseudo_dt is not None:
            tau = params.monotone_pseudo_dt
        else:
            tau = min(0.5 * params.dt, 0.9 / max(bound_u, bound_l, 1e-30))
        upper = upper + tau * rate_u
        lower = np.maximum(lower + tau * rate_l, 0.0)
        if monitor is not None:
            monitor(lower, upper)
        gap = float(np.max(upper - lower))
        drift = max(float(np.max(np.abs(rate_u))), float(np.max(np.abs(rate_l))))
        if gap <= params.monotone_tol and drift <= params.monotone_tol:
            return upper, lower
    raise SolverError(
        f"bracket iteration did not close the gap within {params.monotone_max_steps} pseudo-steps",
        iterate=0.5 * (upper + lower),
    )


def advance(
    state: SimState,
    t_end: float,
    params: ImplicitStepParams,
    law: PressureLaw,
    growth: GrowthModel,
    grid: Grid1D,
    nutrient: Optional[NutrientModel] = None,
    hook: Optional[Callable[[int, SimState, SimState], None]] = None,
) -> SimState:
    """Repeated implicit steps to t_end.

    Nutrient-coupled runs solve the elliptic nutrient problem from the
    start-of-step density and take the density step against that frozen
    field.  Newton failures fall back to the monotone bracket; the step then
    uses the bracket midpoint.  ``hook(k, new_state, prev_state)`` runs after
    every step.
    """
    if t_end < state.t - 1e-12:
        raise ValueError("t_end lies before the state time")
    pressure_fed = getattr(growth, "pressure_fed", True)
    if not pressure_fed:
        if nutrient is None:
            raise ValueError("nutrient-fed growth needs a nutrient model")
        check_dt_bound(params.dt, growth, c_b=nutrient.c_b)
    else:
        check_dt_bound(params.dt, growth)

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
        c = None
        if pressure_fed:
            growth_arg: GrowthArg = growth
        else:
            if isinstance(nutrient, InVitro):
                c = solve_vitro(state.n, nutrient, grid)
            elif isinstance(nutrient, InVivo):
                c = solve_vivo(state.n, nutrient, grid)
            else:
                raise TypeError(f"unknown nutrient model {type(nutrient)!r}")
            growth_arg = growth_eval(growth, c)
        try:
            n_new = solve_step_newton(state.n, step_params, law, growth_arg, grid)
        except SolverError:
            up, lo = solve_step_monotone(state.n, step_params, law, growth_arg, grid)
            n_new = 0.5 * (up + lo)
        new_state = SimState(state.t + dt_k, n_new, c=c)
        k += 1
        if hook is not None:
            hook(k, new_state, state)
        state = new_state
    return state
