import numpy as np
import pytest

from pmtumor.analytic import barenblatt
from pmtumor.core import (
    Constant,
    Grid1D,
    Grid2D,
    LinearPressure,
    PressureLaw,
    SimState,
)
from pmtumor.diagnostics import (
    complementarity_integral,
    complementarity_sup,
    l1_distance,
    l1_error_spacetime,
    record,
)
from pmtumor.implicit1d import ImplicitStepParams, advance


class TestRecord:
    def test_zero_state(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=2.0)
        rec = record(SimState(0.0, np.zeros(grid.n_nodes)), None, law, Constant(0.0), grid)
        assert rec.mass == 0.0 and rec.l1_pressure == 0.0 and rec.comp_residual == 0.0
        assert rec.bv == 0.0 and rec.grad_l2_sq == 0.0 and rec.dt_l1 is None

    def test_homeostatic_state(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=3.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        rec = record(SimState(0.0, np.ones(grid.n_nodes)), None, law, growth, grid)
        assert rec.comp_residual == 0.0
        assert rec.ab_min == 0.0
        assert rec.linf_density == 1.0 and rec.linf_pressure == 1.0

    def test_dt_l1_uses_previous_state(self):
        grid = Grid1D.symmetric(1.0, 0.5)
        law = PressureLaw(gamma=2.0)
        prev = SimState(0.0, np.array([0.0, 0.1, 0.2, 0.1, 0.0]))
        curr = SimState(0.1, np.array([0.0, 0.2, 0.2, 0.0, 0.0]))
        rec = record(curr, prev, law, Constant(0.0), grid)
        assert rec.dt_l1 == pytest.approx(grid.dx * (0.1 + 0.1) / 0.1)

    def test_grid_mismatch_rejected(self):
        grid = Grid1D.symmetric(1.0, 0.5)
        law = PressureLaw(gamma=2.0)
        prev = SimState(0.0, np.zeros(7))
        with pytest.raises(ValueError):
            record(SimState(0.1, np.zeros(grid.n_nodes)), prev, law, Constant(0.0), grid)

    def test_lq_norms_1d_and_2d(self):
        grid = Grid1D.symmetric(1.0, 0.5)
        law = PressureLaw(gamma=1.0)
        state = SimState(0.0, np.array([0.0, 0.5, 1.0, 0.5, 0.0]))
        rec = record(state, None, law, Constant(0.0), grid, lq_exponents=[2.0, np.inf])
        assert rec.lq_grad_norms[np.inf] == pytest.approx(1.0)  # max |face gradient|
        g2 = Grid2D.square(1.0, 0.5)
        X, _ = np.meshgrid(g2.xs, g2.ys)
        rec2 = record(SimState(0.0, np.abs(X)), None, law, Constant(0.0), g2,
                      lq_exponents=[np.inf])
        assert rec2.lq_grad_norms[np.inf] == pytest.approx(1.0)

    def test_gronwall_quantity_self_convergence(self):
        # Theorem-(v)-style quantity: time integral of dx*sum|Q|^2 stays
        # within 5% under dx halving on the same self-similar run
        totals = []
        for dx in (1.0 / 16, 1.0 / 32):
            grid = Grid1D.symmetric(5.0, dx)
            gamma = 3.0
            law = PressureLaw(gamma=gamma, kappa=(gamma + 1.0) / gamma)
            params = ImplicitStepParams(dt=0.01 * dx)
            state = SimState(0.0, barenblatt(grid.nodes, 0.0, gamma, 1.0))
            acc = [0.0]

            def hook(_k, s, prev, acc=acc, law=law, grid=grid, params=params):
                r = record(s, prev, law, Constant(0.0), grid)
                acc[0] += params.dt * r.grad_l2_sq

            advance(state, 0.05, params, law, Constant(0.0), grid, hook=hook)
            totals.append(acc[0])
        assert abs(totals[1] - totals[0]) <= 0.05 * totals[0]


class TestL1Error:
    def test_exact_history_gives_zero(self):
        grid = Grid1D.symmetric(2.0, 0.1)
        dt = 0.05

        def exact(x, t):
            return np.sin(x) + t

        hist = [exact(grid.nodes, j * dt) for j in range(5)]
        assert l1_error_spacetime(hist, exact, grid, dt) == 0.0

    def test_constant_offset_measures_volume(self):
        grid = Grid1D.symmetric(2.0, 0.1)
        dt = 0.05
        eps = 1e-3
        steps = 7
        hist = [np.full(grid.n_nodes, eps) for _ in range(steps)]
        err = l1_error_spacetime(hist, lambda x, t: np.zeros_like(x), grid, dt)
        volume = grid.n_nodes * grid.dx * steps * dt
        assert err == pytest.approx(eps * volume, rel=1e-12)

    def test_metric_properties(self):
        rng = np.random.default_rng(13)
        grid = Grid1D.symmetric(1.0, 0.25)
        dt = 0.1
        for _ in range(10):
            a = [rng.uniform(0, 1, grid.n_nodes) for _ in range(4)]
            b = [rng.uniform(0, 1, grid.n_nodes) for _ in range(4)]
            c = [rng.uniform(0, 1, grid.n_nodes) for _ in range(4)]
            dab = l1_distance(a, b, grid, dt)
            dba = l1_distance(b, a, grid, dt)
            assert dab == dba  # symmetry
            assert dab >= 0.0
            assert l1_distance(a, a, grid, dt) == 0.0
            assert l1_distance(a, c, grid, dt) <= dab + l1_distance(b, c, grid, dt) + 1e-12

    def test_length_mismatch_rejected(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        with pytest.raises(ValueError):
            l1_distance([np.zeros(5)], [np.zeros(5), np.zeros(5)], grid, 0.1)


class TestComplementarity:
    def test_zero_history(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=2.0)
        hist = [SimState(0.0, np.zeros(grid.n_nodes)) for _ in range(3)]
        assert complementarity_sup(hist, law, Constant(0.0), grid, 0.1) == 0.0
        assert complementarity_integral(hist, law, Constant(0.0), grid, 0.1) == 0.0

    def test_homeostatic_history(self):
        grid = Grid1D.symmetric(1.0, 0.25)
        law = PressureLaw(gamma=3.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        hist = [SimState(0.1 * j, np.ones(grid.n_nodes)) for j in range(3)]
        assert complementarity_sup(hist, law, growth, grid, 0.1) == 0.0

    def test_residual_decays_in_gamma(self):
        # stiff-limit consistency at a small scale: integral residual shrinks
        # roughly like 1/gamma on a fixed pressure-profile run
        from pmtumor.analytic import vitro_exact

        grid = Grid1D.symmetric(3.0, 0.05)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        values = {}
        for gamma in (20.0, 80.0):
            law = PressureLaw(gamma=gamma, kappa=1.0)
            params = ImplicitStepParams(dt=1e-3)
            _, p0 = vitro_exact(grid.nodes, 1.0, 1.0)
            state = SimState(0.0, law.density_at(p0))
            hist = [state]
            advance(state, 0.062, params, law, growth, grid,
                    hook=lambda _k, s, _p: hist.append(s))
            values[gamma] = complementarity_integral(hist, law, growth, grid, params.dt)
        assert values[80.0] < values[20.0]
        slope = np.log(values[80.0] / values[20.0]) / np.log(80.0 / 20.0)
        assert slope <= -0.8
