"""Upwind finite-difference schemes for porous-medium tumor growth.

Density n moves down gradients of the pressure p = kappa*n**gamma and reacts
at a pressure- or nutrient-dependent rate.  The package provides the
semi-discrete scheme with an explicit oracle marcher, the fully implicit 1D
and 2D schemes (Newton primary, monotone bracket fallback), quasi-static
nutrient solvers, a two-species extension, closed-form reference solutions,
and the diagnostics that turn the scheme's stability estimates into runnable
checks.  The ``simulate`` CLI drives the stock experiments.
"""

from .core import (
    Constant,
    Grid1D,
    Grid2D,
    GrowthModel,
    LinearPressure,
    NutrientLinear,
    NutrientPiecewise,
    PressureGeneric,
    PressureLaw,
    SimState,
    SolverError,
    StabilityError,
    as_field,
    density_cap,
    face_gradient,
    growth_eval,
    growth_sup,
    pressure_from_density,
    second_difference,
    upwind_face_value,
)
from .analytic import (
    FrontRadius,
    barenblatt,
    integrate_front_vitro,
    integrate_front_vivo,
    vitro_exact,
    vivo_exact,
)
from .diagnostics import (
    DiagnosticsRecord,
    complementarity_integral,
    complementarity_sup,
    l1_error_spacetime,
    record,
)
from .implicit1d import (
    FluxPair,
    ImplicitStepParams,
    advance,
    flux_A,
    residual,
    solve_step_monotone,
    solve_step_newton,
)
from .nutrient import (
    InVitro,
    InVivo,
    NutrientModel,
    solve_vitro,
    solve_vivo,
    support_mask,
    thomas_solve,
)
from .scheme2d import (
    ImplicitStepper2D,
    gradient_lq_norm,
    residual2d,
    step2d,
)
from .semidiscrete import (
    RhsWorkspace,
    ab_monitor,
    advance_explicit,
    rhs,
    stability_budget,
    step_explicit,
)
from .twospecies import TwoSpeciesState, advance_twospecies, step_twospecies

__version__ = "0.1.0"
