import numpy as np
import pytest

from pmtumor.core import (
    Constant,
    Grid1D,
    Grid2D,
    LinearPressure,
    PressureLaw,
)
from pmtumor.implicit1d import ImplicitStepParams, solve_step_newton
from pmtumor.implicit1d import residual as residual1d
from pmtumor.scheme2d import (
    ImplicitStepper2D,
    gradient_lq_norm,
    hole_pressure_min,
    residual2d,
    second_difference_2d,
    step2d,
)


def shell_density(grid, r_in, r_out, value=0.8):
    # radii from integer index offsets: exactly mirror/transpose symmetric
    ii = np.arange(grid.nx) - grid.mx
    jj = np.arange(grid.ny) - grid.my
    I, J = np.meshgrid(ii, jj)
    r = grid.dx * np.sqrt((I**2 + J**2).astype(float))
    return np.where((r > r_in) & (r < r_out), value, 0.0)


class TestResidual2D:
    def test_zero_fields(self):
        grid = Grid2D.square(1.0, 0.25)
        params = ImplicitStepParams(dt=0.01)
        law = PressureLaw(gamma=2.0)
        z = np.zeros((grid.ny, grid.nx))
        assert np.all(residual2d(z, z, params, law, Constant(0.0), grid) == 0.0)

    def test_dihedral_symmetry(self):
        grid = Grid2D.square(2.0, 0.1)
        params = ImplicitStepParams(dt=0.01)
        law = PressureLaw(gamma=3.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n_curr = shell_density(grid, 0.5, 1.5)
        n_next = np.clip(n_curr + 0.01 * shell_density(grid, 0.3, 1.7), 0.0, 1.0)
        F = residual2d(n_next, n_curr, params, law, growth, grid)
        for transform in (np.fliplr, np.flipud, np.transpose):
            np.testing.assert_allclose(F, transform(F), atol=1e-12)

    def test_extruded_matches_1d(self):
        grid2 = Grid2D.square(2.0, 0.25)
        grid1 = Grid1D.symmetric(2.0, 0.25)
        params = ImplicitStepParams(dt=0.02)
        law = PressureLaw(gamma=2.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        prof_curr = 0.8 * np.maximum(0.0, 1.0 - np.abs(grid1.nodes))
        prof_next = 0.9 * np.maximum(0.0, 1.0 - np.abs(grid1.nodes) / 1.2)
        F1 = residual1d(prof_next, prof_curr, params, law, growth, grid1)
        F2 = residual2d(
            np.tile(prof_next, (grid2.ny, 1)),
            np.tile(prof_curr, (grid2.ny, 1)),
            params, law, growth, grid2,
        )
        for row in F2:
            np.testing.assert_allclose(row, F1, atol=1e-14)

    def test_sum_telescopes(self):
        rng = np.random.default_rng(5)
        grid = Grid2D.square(1.0, 0.125)
        params = ImplicitStepParams(dt=0.01)
        law = PressureLaw(gamma=2.0, kappa=1.0)
        n_curr = rng.uniform(0, 1, (grid.ny, grid.nx))
        n_next = rng.uniform(0, 1, (grid.ny, grid.nx))
        F = residual2d(n_next, n_curr, params, law, Constant(0.0), grid)
        assert np.sum(F) == pytest.approx(np.sum(n_next) - np.sum(n_curr), rel=1e-11)


class TestStep2D:
    def test_zero_fixed_point(self):
        grid = Grid2D.square(1.0, 0.25)
        params = ImplicitStepParams(dt=0.01)
        law = PressureLaw(gamma=2.0)
        z = np.zeros((grid.ny, grid.nx))
        out = step2d(z, params, law, LinearPressure(alpha=1.0, p_h=1.0), grid)
        np.testing.assert_array_equal(out, 0.0)

    def test_extruded_matches_1d_newton(self):
        grid2 = Grid2D.square(2.0, 0.25)
        grid1 = Grid1D.symmetric(2.0, 0.25)
        params = ImplicitStepParams(dt=0.02)
        law = PressureLaw(gamma=3.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        prof = 0.9 * np.maximum(0.0, 1.0 - np.abs(grid1.nodes))
        out1 = solve_step_newton(prof, params, law, growth, grid1)
        out2 = step2d(np.tile(prof, (grid2.ny, 1)), params, law, growth, grid2,
                      solver="newton")
        for row in out2:
            np.testing.assert_allclose(row, out1, atol=1e-10)

    def test_focusing_data_mass_increases(self):
        # G(p) = 1 - p is positive wherever p < 1, so one step adds mass
        grid = Grid2D.square(8.0, 0.25)
        params = ImplicitStepParams(dt=1e-3)
        law = PressureLaw(gamma=10.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n0 = shell_density(grid, 0.6, 6.0)
        out = step2d(n0, params, law, growth, grid, solver="newton")
        assert np.sum(out) > np.sum(n0)
        assert out.min() >= 0.0 and out.max() <= 1.0 + 1e-10

    def test_gauss_seidel_agrees_with_newton(self):
        grid = Grid2D.square(1.5, 0.125)
        params = ImplicitStepParams(dt=5e-3, newton_tol=1e-13)
        law = PressureLaw(gamma=3.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n0 = shell_density(grid, 0.3, 1.0, value=0.7)
        newton = step2d(n0, params, law, growth, grid, solver="newton")
        gs = step2d(n0, params, law, growth, grid, solver="gauss_seidel")
        assert np.max(np.abs(newton - gs)) < 1e-9

    def test_symmetry_preserved_over_steps(self):
        grid = Grid2D.square(2.0, 0.1)
        params = ImplicitStepParams(dt=2e-3)
        law = PressureLaw(gamma=5.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        stepper = ImplicitStepper2D(params, law, growth, grid, solver="newton")
        n = shell_density(grid, 0.4, 1.4)
        for _ in range(5):
            n = stepper.step(n)
        for transform in (np.fliplr, np.flipud, np.transpose):
            np.testing.assert_allclose(n, transform(n), atol=1e-10)

    def test_factorization_reuse_matches_fresh_solves(self):
        grid = Grid2D.square(1.5, 0.125)
        params = ImplicitStepParams(dt=2e-3)
        law = PressureLaw(gamma=4.0, kappa=1.0)
        growth = LinearPressure(alpha=1.0, p_h=1.0)
        n_reuse = shell_density(grid, 0.3, 1.0, value=0.7)
        n_fresh = n_reuse.copy()
        stepper = ImplicitStepper2D(params, law, growth, grid, solver="newton")
        for _ in range(4):
            n_reuse = stepper.step(n_reuse)
            n_fresh = step2d(n_fresh, params, law, growth, grid, solver="newton")
        assert np.max(np.abs(n_reuse - n_fresh)) < 1e-10


class TestGradientNorms:
    def test_constant_field(self):
        grid = Grid2D.square(1.0, 0.25)
        p = np.full((grid.ny, grid.nx), 2.0)
        for q in (1.0, 2.0, 4.0, np.inf):
            assert gradient_lq_norm(p, grid, q) == 0.0

    def test_unit_slope_sup_norm(self):
        grid = Grid2D.square(2.0, 1.0)
        X, _ = np.meshgrid(grid.xs, grid.ys)
        assert gradient_lq_norm(X, grid, np.inf) == pytest.approx(1.0)

    def test_radial_cone_l2(self):
        # |grad p| = 1 on the unit disc: squared L2 norm equals the disc area
        grid = Grid2D.square(2.0, 0.02)
        X, Y = np.meshgrid(grid.xs, grid.ys)
        p = np.maximum(0.0, 1.0 - np.sqrt(X**2 + Y**2))
        val = gradient_lq_norm(p, grid, 2.0)
        assert val == pytest.approx(np.sqrt(np.pi), rel=0.05)

    def test_bad_exponent(self):
        grid = Grid2D.square(1.0, 0.5)
        with pytest.raises(ValueError):
            gradient_lq_norm(np.zeros((grid.ny, grid.nx)), grid, 0.5)


class TestHelpers:
    def test_second_difference_quadratic(self):
        grid = Grid2D.square(2.0, 0.1)
        X, Y = np.meshgrid(grid.xs, grid.ys)
        d2 = second_difference_2d(X**2 + Y**2, grid)
        np.testing.assert_allclose(d2[1:-1, 1:-1], 4.0, rtol=1e-9)

    def test_hole_pressure_min(self):
        grid = Grid2D.square(1.0, 0.25)
        X, Y = np.meshgrid(grid.xs, grid.ys)
        p = X**2 + Y**2
        assert hole_pressure_min(p, grid, 0.3) == pytest.approx(0.0, abs=1e-30)
        # any nonnegative radius keeps at least the origin node in the disc
        assert hole_pressure_min(p, grid, 0.0) == pytest.approx(0.0, abs=1e-30)
        with pytest.raises(ValueError):
            hole_pressure_min(p, grid, -0.1)
