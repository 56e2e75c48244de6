"""
数值基础模块测试
"""
import numpy as np
import pytest

from core.exceptions import ConfigurationError, GridAlignmentError, OutOfDomainError
from core.numerics import (
    Boundary, ComplexField, RealField, SpatialGrid, gradient, gradient_log, integrate,
    interpolate, laplacian,
)


class TestSpatialGrid:

    def test_periodic_spacing_and_nodes(self):
        grid = SpatialGrid(8, 0.0, 2.0, Boundary.PERIODIC)
        assert grid.spacing == pytest.approx(0.25)
        assert grid.x[0] == 0.0
        assert grid.x[-1] == pytest.approx(1.75)

    def test_box_grid_stores_interior_points(self):
        grid = SpatialGrid(9, 0.0, 1.0, Boundary.BOX)
        assert grid.spacing == pytest.approx(0.1)
        assert grid.x[0] == pytest.approx(0.1)
        assert grid.x[-1] == pytest.approx(0.9)

    def test_boundary_accepts_string(self):
        assert SpatialGrid(16, boundary='box').boundary is Boundary.BOX

    @pytest.mark.parametrize('n, x_min, x_max', [(4, 0.0, 1.0), (16, 1.0, 1.0), (16, 2.0, 1.0)])
    def test_invalid_grid_rejected(self, n, x_min, x_max):
        with pytest.raises(ConfigurationError):
            SpatialGrid(n, x_min, x_max)

    def test_wrap(self):
        periodic = SpatialGrid(16, 0.0, 1.0, Boundary.PERIODIC)
        box = SpatialGrid(16, 0.0, 1.0, Boundary.BOX)
        np.testing.assert_allclose(periodic.wrap(np.array([1.25, -0.25])), [0.25, 0.75])
        np.testing.assert_allclose(box.wrap(np.array([1.25, -0.25])), [1.0, 0.0])


class TestFields:

    def test_length_mismatch(self, box_grid):
        with pytest.raises(GridAlignmentError):
            RealField(box_grid, np.zeros(box_grid.n_points + 1))

    def test_values_are_read_only_copies(self, box_grid):
        source = np.ones(box_grid.n_points)
        f = RealField(box_grid, source)
        source[0] = 5.0
        assert f.values[0] == 1.0
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_integrate_box_ground_density(self, box_grid):
        rho = RealField(box_grid, 2.0 * np.sin(np.pi * box_grid.x) ** 2)
        assert integrate(rho) == pytest.approx(1.0, abs=1e-12)

    def test_integrate_sine_on_periodic_grid(self, periodic_grid):
        assert integrate(RealField(periodic_grid, np.sin(2 * np.pi * periodic_grid.x))) == pytest.approx(0.0, abs=1e-14)

    def test_integrate_rejects_complex(self, box_grid):
        with pytest.raises(TypeError):
            integrate(ComplexField(box_grid, np.ones(box_grid.n_points)))


class TestSpectralOperators:

    def test_laplacian_box_sine_mode(self, box_grid):
        f = RealField(box_grid, np.sin(3 * np.pi * box_grid.x))
        expected = -(3 * np.pi) ** 2 * f.values
        np.testing.assert_allclose(laplacian(f).values, expected, atol=1e-9)

    def test_laplacian_periodic_plane_wave(self, periodic_grid):
        k = 2 * np.pi * 5
        f = ComplexField(periodic_grid, np.exp(1j * k * periodic_grid.x))
        np.testing.assert_allclose(laplacian(f).values, -k ** 2 * f.values, atol=1e-8)

    def test_gradient_box_sine_mode(self, box_grid):
        f = RealField(box_grid, np.sin(2 * np.pi * box_grid.x))
        expected = 2 * np.pi * np.cos(2 * np.pi * box_grid.x)
        np.testing.assert_allclose(gradient(f).values, expected, atol=1e-9)

    def test_gradient_periodic(self, periodic_grid):
        f = RealField(periodic_grid, np.cos(2 * np.pi * periodic_grid.x))
        expected = -2 * np.pi * np.sin(2 * np.pi * periodic_grid.x)
        np.testing.assert_allclose(gradient(f).values, expected, atol=1e-10)

    def test_gradient_log_plane_wave(self, periodic_grid):
        k = 2 * np.pi * 2
        psi = ComplexField(periodic_grid, np.exp(1j * k * periodic_grid.x))
        ratio = gradient_log(psi)
        np.testing.assert_allclose(ratio.values, 1j * k, atol=1e-10)
        assert ratio.floored_points == 0

    def test_gradient_log_counts_floored_nodes(self, periodic_grid):
        values = np.ones(periodic_grid.n_points, dtype=complex)
        values[10] = 0.0
        ratio = gradient_log(ComplexField(periodic_grid, values))
        assert ratio.floored_points == 1
        assert np.all(np.isfinite(ratio.values))


class TestInterpolation:

    def test_exact_at_nodes(self, box_grid):
        f = RealField(box_grid, np.sin(np.pi * box_grid.x))
        np.testing.assert_allclose(interpolate(f, box_grid.x[5:20]), f.values[5:20], atol=1e-14)

    def test_linear_field_midpoints(self):
        grid = SpatialGrid(512, 0.0, 1.0, Boundary.BOX)
        f = RealField(grid, 3.0 * grid.x)
        mids = 0.5 * (grid.x[100:400] + grid.x[101:401])
        np.testing.assert_allclose(interpolate(f, mids), 3.0 * mids, atol=1e-10)

    def test_periodic_wraps(self, periodic_grid):
        f = RealField(periodic_grid, np.sin(2 * np.pi * periodic_grid.x))
        assert interpolate(f, 1.3) == pytest.approx(interpolate(f, 0.3), abs=1e-14)

    def test_scalar_returns_scalar(self, periodic_grid):
        f = RealField(periodic_grid, np.cos(2 * np.pi * periodic_grid.x))
        value = interpolate(f, 0.25)
        assert np.ndim(value) == 0
        assert value == pytest.approx(0.0, abs=1e-5)

    def test_box_walls_are_zero(self, box_grid):
        f = RealField(box_grid, np.sin(np.pi * box_grid.x))
        assert interpolate(f, 0.0) == pytest.approx(0.0, abs=1e-14)
        assert interpolate(f, 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_outside_box_raises(self, box_grid):
        f = RealField(box_grid, np.sin(np.pi * box_grid.x))
        with pytest.raises(OutOfDomainError):
            interpolate(f, 1.5)
