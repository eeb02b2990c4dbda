import numpy as np
import pytest

from pmtumor.core import (
    Constant,
    Grid1D,
    LinearPressure,
    PressureLaw,
    SimState,
    StabilityError,
)
from pmtumor.semidiscrete import (
    ab_monitor,
    advance_explicit,
    rhs,
    stability_budget,
    step_explicit,
)


def spike_setup():
    grid = Grid1D.symmetric(1.0, 1.0)
    law = PressureLaw(gamma=2.0, kappa=1.0)
    state = SimState(0.0, np.array([0.0, 1.0, 0.0]))
    return grid, law, state


class TestRhs:
    def test_zero_state(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=3.0)
        out = rhs(SimState(0.0, np.zeros(grid.n_nodes)), law, Constant(0.0), grid)
        assert np.all(out == 0.0)

    def test_homeostatic_equilibrium(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=3.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n_h = np.ones(grid.n_nodes)  # p_h**(1/gamma) with kappa = 1
        out = rhs(SimState(0.0, n_h), law, growth, grid)
        assert np.all(out == 0.0)

    def test_interior_spike(self):
        # hand-evaluated upwind stencil: q faces are -1 and +1 around the
        # spike, both donor picks select the spike node, wall faces carry 0
        grid, law, state = spike_setup()
        out = rhs(state, law, Constant(0.0), grid)
        np.testing.assert_allclose(out, [1.0, -2.0, 1.0], atol=0)

    def test_sum_telescopes_without_growth(self):
        rng = np.random.default_rng(9)
        grid = Grid1D.symmetric(2.0, 0.1)
        law = PressureLaw(gamma=2.5, kappa=0.8)
        n = rng.uniform(0.0, 1.0, grid.n_nodes)
        out = rhs(SimState(0.0, n), law, Constant(0.0), grid)
        assert abs(np.sum(out) * grid.dx) < 1e-13


class TestStepExplicit:
    def test_equilibrium_unchanged(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=3.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        state = SimState(0.0, np.ones(grid.n_nodes))
        out = step_explicit(state, 0.01, law, growth, grid)
        np.testing.assert_array_equal(out.n, state.n)
        assert out.t == 0.01

    def test_spike_one_step(self):
        grid, law, state = spike_setup()
        out = step_explicit(state, 0.01, law, Constant(0.0), grid)
        np.testing.assert_allclose(out.n, [0.01, 0.98, 0.01], rtol=1e-15)

    def test_mass_conserved_over_100_steps(self):
        # telescoping oracle: without growth the node sum is a conserved sum
        grid = Grid1D.symmetric(2.0, 0.1)
        law = PressureLaw(gamma=2.0, kappa=1.0)
        n0 = np.maximum(0.0, 1.0 - np.abs(grid.nodes))
        state = SimState(0.0, n0)
        mass0 = float(np.sum(n0)) * grid.dx
        dt = stability_budget(n0, law, grid)
        for _ in range(100):
            state = step_explicit(state, dt, law, Constant(0.0), grid)
        mass = float(np.sum(state.n)) * grid.dx
        assert abs(mass - mass0) <= 1e-12 * mass0

    def test_oversized_step_raises(self):
        grid, law, state = spike_setup()
        with pytest.raises(StabilityError):
            step_explicit(state, 2.0, law, Constant(0.0), grid)

    def test_positivity_and_cap_preserved_within_budget(self):
        rng = np.random.default_rng(2)
        grid = Grid1D.symmetric(1.0, 0.05)
        law = PressureLaw(gamma=2.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n = rng.uniform(0.0, 1.0, grid.n_nodes)
        state = SimState(0.0, n)
        for _ in range(200):
            dt = stability_budget(state.n, law, grid)
            state = step_explicit(state, dt, law, growth, grid)
        assert state.n.min() >= 0.0
        assert state.n.max() <= 1.0 + 1e-12


class TestTheoremBounds:
    def test_l1_and_bv_growth_bounds(self):
        # Gronwall constants made explicit: e^{G(0) t} times the initial value
        grid = Grid1D.symmetric(2.0, 0.05)
        law = PressureLaw(gamma=2.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n0 = 0.9 * np.exp(-4.0 * grid.nodes**2)
        l1_0 = float(np.sum(np.abs(n0))) * grid.dx
        bv_0 = float(np.sum(np.abs(np.diff(n0)))) * grid.dx
        g0 = growth.alpha * growth.p_h
        state = SimState(0.0, n0)

        def check(_k, s):
            bound = np.exp(g0 * s.t)
            assert float(np.sum(np.abs(s.n))) * grid.dx <= bound * l1_0 + 1e-8
            assert float(np.sum(np.abs(np.diff(s.n)))) * grid.dx <= bound * bv_0 + 1e-8

        advance_explicit(state, 1.0, law, growth, grid, hook=check)


class TestAbMonitor:
    def test_flat_homeostatic_pressure(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=3.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        assert ab_monitor(SimState(0.0, np.ones(grid.n_nodes)), law, growth, grid) == 0.0

    def test_quadratic_pressure(self):
        # p_i = x_i**2 exactly when n = |x| with gamma = 2, kappa = 1
        grid = Grid1D.symmetric(1.0, 0.1)
        law = PressureLaw(gamma=2.0, kappa=1.0)
        state = SimState(0.0, np.abs(grid.nodes))
        assert ab_monitor(state, law, Constant(0.0), grid) == pytest.approx(2.0, rel=1e-10)

    def test_gamma_one_floor_short_run(self):
        # -1/(gamma t) floor at gamma = 1 on a short oracle run
        from pmtumor.analytic import barenblatt

        grid = Grid1D.symmetric(3.0, 0.1)
        law = PressureLaw(gamma=1.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n0 = barenblatt(grid.nodes, 0.0, 1.0, 0.75, t0=1.0)
        state = SimState(0.0, n0)
        for t_stop in (0.1, 0.2, 0.3):
            state = advance_explicit(state, t_stop, law, growth, grid)
            w_min = ab_monitor(state, law, growth, grid)
            assert w_min >= -1.0 / t_stop - 1e-6
