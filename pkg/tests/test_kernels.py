"""Tests for the Oseen profiles, radial quadrature and Biot-Savart kernels."""

import numpy as np
import pytest

from src.exceptions import QuadratureError, SingularityError
from src.kernels import (
    RadialGrid,
    RadialProfile,
    biot_savart_radial,
    biot_savart_radial_outer,
    gauss_profile,
    oseen_velocity,
    oseen_vorticity,
    phi_h_profiles,
    point_vortex_velocity,
    sup_r2h,
)


class TestProfiles:
    def test_gauss_has_unit_mass(self):
        grid = RadialGrid.default()
        assert abs(grid.mass(gauss_profile(grid.nodes)) - 1.0) < 1e-12

    def test_oseen_velocity_matches_closed_form(self):
        xi = np.array([[1.0, 0.5], [-2.0, 3.0], [0.3, -0.1]])
        r2 = np.sum(xi * xi, axis=-1)
        expected = np.stack([-xi[:, 1], xi[:, 0]], axis=-1) * ((1.0 - np.exp(-r2 / 4.0)) / (2.0 * np.pi * r2))[:, None]
        assert np.allclose(oseen_velocity(xi), expected, rtol=1e-14, atol=0.0)

    def test_oseen_velocity_is_smooth_at_origin(self):
        xi = np.array([[1e-6, 0.0], [0.0, 0.0]])
        v = oseen_velocity(xi)
        assert np.allclose(v[0], [0.0, 1e-6 / (8.0 * np.pi)], rtol=1e-9)
        assert np.all(v[1] == 0.0)

    def test_oseen_vorticity_peak(self):
        nu_t = 0.04
        assert oseen_vorticity([0.0, 0.0], 2.0, nu_t) == pytest.approx(2.0 / (4.0 * np.pi * nu_t))

    def test_phi_h_relation(self):
        r = np.linspace(0.0, 15.0, 301)
        phi, h = phi_h_profiles(r)
        assert h[0] == pytest.approx(1.0)
        assert phi[0] == pytest.approx(1.0 / (8.0 * np.pi))
        assert np.allclose(2.0 * phi * h, gauss_profile(r), rtol=1e-12, atol=1e-300)

    def test_sup_r2h(self):
        value, location = sup_r2h()
        assert value == pytest.approx(2.59, abs=0.01)
        assert location == pytest.approx(2.525, abs=0.01)
        assert value < 4.0


class TestRadialGrid:
    def test_too_few_nodes(self):
        with pytest.raises(QuadratureError):
            RadialGrid.build(8, 20.0)

    def test_coarse_grid_fails_validation(self):
        with pytest.raises(QuadratureError) as info:
            RadialGrid.build(16, 20.0)
        assert info.value.details["estimate"] > info.value.details["tolerance"]

    def test_uniform_grid(self):
        grid = RadialGrid.uniform(101, 10.0)
        assert np.allclose(grid.nodes, np.linspace(0.0, 10.0, 101))
        assert np.allclose(grid.jacobian, 1.0)

    def test_integrate_polynomial(self):
        grid = RadialGrid.uniform(201, 2.0)
        assert grid.integrate(grid.nodes**3) == pytest.approx(4.0, rel=1e-12)

    def test_cumulative_and_tail_add_up(self, grid):
        values = gauss_profile(grid.nodes) * grid.nodes
        head = grid.cumulative(values)
        tail = grid.cumulative_tail(values)
        assert np.allclose(head + tail, head[-1], rtol=0.0, atol=1e-10)

    def test_profile_interpolation_vanishes_beyond_r_max(self, grid):
        profile = RadialProfile.from_function(grid, gauss_profile)
        assert profile(25.0) == 0.0
        assert profile(1.3) == pytest.approx(gauss_profile(1.3), rel=1e-7)

    def test_profile_shape_mismatch(self, grid):
        with pytest.raises(ValueError):
            RadialProfile(grid, np.zeros(3))


class TestBiotSavart:
    def test_radial_biot_savart_of_gauss(self):
        grid = RadialGrid.default()
        speed = biot_savart_radial(RadialProfile.from_function(grid, gauss_profile))
        phi, _ = phi_h_profiles(grid.nodes)
        assert np.max(np.abs(speed.values - grid.nodes * phi)) < 1e-8

    def test_outer_form_for_zero_mean(self):
        grid = RadialGrid.default()
        wide = np.exp(-grid.nodes**2 / 8.0) / (8.0 * np.pi)
        w = RadialProfile(grid, gauss_profile(grid.nodes) - wide)
        assert abs(w.mass()) < 1e-12
        inner = biot_savart_radial(w, tolerance=1e-6)
        outer = biot_savart_radial_outer(w)
        assert np.max(np.abs(inner.values - outer.values)) < 1e-8

    def test_point_vortex_velocity(self):
        v = point_vortex_velocity([1.0, 0.0], [[0.0, 0.0]], [2.0 * np.pi])
        assert np.allclose(v, [0.0, 1.0])

    def test_point_vortex_velocity_superposition(self):
        centers = [[0.0, 0.0], [2.0, 0.0]]
        v = point_vortex_velocity([1.0, 0.0], centers, [1.0, 1.0])
        assert np.allclose(v, [0.0, 0.0], atol=1e-15)

    def test_point_vortex_velocity_at_center(self):
        with pytest.raises(SingularityError) as info:
            point_vortex_velocity([[0.0, 0.0]], [[0.0, 0.0]], [1.0])
        assert info.value.details["indices"] == [0, 0]
