import time

import numpy as np
import pytest

from pmtumor.analytic import vitro_exact, vivo_exact
from pmtumor.core import Grid1D, NutrientLinear, PressureLaw, SimState
from pmtumor.fastpath import run_nutrient_experiment
from pmtumor.implicit1d import ImplicitStepParams, advance
from pmtumor.nutrient import InVitro, InVivo


@pytest.mark.parametrize("vivo", [False, True])
def test_kernel_matches_reference_path(vivo):
    grid = Grid1D.symmetric(5.0, 0.1)
    gamma, kappa, c_b = 20.0, 1.0, 1.0
    law = PressureLaw(gamma=gamma, kappa=kappa)
    exact = vivo_exact if vivo else vitro_exact
    _, p0 = exact(grid.nodes, 1.0, c_b)
    n0 = law.density_at(p0)
    dt = 1e-4
    steps = 200

    params = ImplicitStepParams(dt=dt)
    model = InVivo(c_b=c_b) if vivo else InVitro(c_b=c_b)
    ref = advance(SimState(0.0, n0.copy()), steps * dt, params, law,
                  NutrientLinear(), grid, nutrient=model)

    out = run_nutrient_experiment(
        n0, grid, dt, steps, gamma, kappa, vivo, c_b,
        snap_steps=np.array([steps], dtype=np.int64),
    )
    assert np.max(np.abs(out.n_final - ref.n)) < 1e-11
    # snapshot nutrient equals the reference solver's field at the final state
    from pmtumor.nutrient import solve_vitro, solve_vivo

    c_ref = (solve_vivo if vivo else solve_vitro)(ref.n, model, grid)
    assert np.max(np.abs(out.snap_c[0] - c_ref)) < 1e-11


def test_error_accumulation_matches_direct_sum():
    grid = Grid1D.symmetric(5.0, 0.05)
    gamma, c_b = 40.0, 1.0
    law = PressureLaw(gamma=gamma, kappa=1.0)
    _, p0 = vitro_exact(grid.nodes, 1.0, c_b)
    n0 = law.density_at(p0)
    dt = 1e-4
    steps = 50
    radii = np.full(steps + 1, 1.0)

    out = run_nutrient_experiment(
        n0, grid, dt, steps, gamma, 1.0, False, c_b,
        radii=radii,
        err_steps=np.array([steps], dtype=np.int64),
    )
    # recompute the final-step spatial error independently
    params = ImplicitStepParams(dt=dt)
    ref = advance(SimState(0.0, n0.copy()), steps * dt, params, law,
                  NutrientLinear(), grid, nutrient=InVitro(c_b=c_b))
    ind = (np.abs(grid.nodes) <= 1.0).astype(float)
    direct = grid.dx * np.sum(np.abs(ref.n - ind))
    assert out.err_vals[0] == pytest.approx(direct, rel=1e-10)
    assert out.err_spacetime > 0.0


def test_capture_arrays_and_extrema():
    grid = Grid1D.symmetric(3.0, 0.1)
    gamma, c_b = 10.0, 1.0
    law = PressureLaw(gamma=gamma, kappa=1.0)
    _, p0 = vitro_exact(grid.nodes, 1.0, c_b)
    n0 = law.density_at(p0)
    out = run_nutrient_experiment(
        n0, grid, 1e-4, 30, gamma, 1.0, False, c_b,
        diag_steps=np.array([10, 20], dtype=np.int64),
        snap_steps=np.array([30], dtype=np.int64),
    )
    assert out.diag_now.shape == (2, grid.n_nodes)
    assert np.any(out.diag_prev[0] != out.diag_now[0])  # consecutive states differ
    assert 0.0 <= out.n_min <= out.n_max <= 1.05
    assert np.all(out.snap_c[0] <= c_b + 1e-12)


def test_throughput_smoke():
    # the stock runs take 1.5e6 steps; extrapolated budget is 10 minutes
    grid = Grid1D.symmetric(5.0, 0.025)
    gamma, c_b = 80.0, 1.0
    law = PressureLaw(gamma=gamma, kappa=1.0)
    _, p0 = vitro_exact(grid.nodes, 1.0, c_b)
    n0 = law.density_at(p0)
    run_nutrient_experiment(n0, grid, 1e-6, 100, gamma, 1.0, False, c_b)  # compile
    start = time.perf_counter()
    steps = 20_000
    run_nutrient_experiment(n0, grid, 1e-6, steps, gamma, 1.0, False, c_b)
    per_step = (time.perf_counter() - start) / steps
    assert per_step < 4e-4, f"{per_step * 1e6:.0f} us/step extrapolates past the run budget"
