"""Tests for angular modes, the multipole series and the residuum terms."""

import math

import numpy as np
import pytest

from src.exceptions import AliasingError, DomainError, SingularityError
from src.expansion import (
    AzimuthalMode,
    naive_residuum_exact,
    project_modes,
    remainder_scaling,
    residuum_terms,
    strain_counter_term,
    strain_field,
    v1_v2_split,
    velocity_difference_series,
    w_field,
)
from src.kernels import RadialProfile, gauss_profile, oseen_velocity, point_vortex_velocity
from src.point_vortex import VortexConfiguration
from src.utils import polar_grid, rotate

from .conftest import PAIR_POSITIONS, static_trajectory


class TestAzimuthalMode:
    def test_project_modes(self):
        theta = 2.0 * np.pi * np.arange(64) / 64
        values = 3.0 * np.cos(2 * theta) + 5.0 * np.sin(2 * theta) + 0.7 * np.cos(5 * theta)
        c, s = project_modes(values, 2)
        assert c == pytest.approx(3.0)
        assert s == pytest.approx(5.0)
        c0, s0 = project_modes(values + 1.5, 0)
        assert c0 == pytest.approx(1.5)
        assert s0 == 0.0

    def test_project_modes_aliasing(self):
        with pytest.raises(AliasingError) as info:
            project_modes(np.zeros(16), 10)
        assert info.value.details["mode"] == 10

    def test_complex_form_round_trip(self, grid):
        u = (1.0 + 2.0j) * gauss_profile(grid.nodes)
        mode = AzimuthalMode.from_complex(2, grid, u)
        assert np.allclose(mode.as_complex(), u)
        r, theta = 1.2, 0.4
        expected = np.real((1.0 + 2.0j) * gauss_profile(r) * np.exp(2j * theta))
        assert mode.evaluate(r, theta) == pytest.approx(expected, rel=1e-8)

    def test_rotation(self, grid):
        mode = AzimuthalMode.from_arrays(3, grid, gauss_profile(grid.nodes))
        rotated = mode.rotated(0.3)
        assert rotated.evaluate(1.0, 0.8) == pytest.approx(mode.evaluate(1.0, 0.5), rel=1e-10)

    def test_modes_are_y_orthogonal(self, grid):
        a = AzimuthalMode.from_arrays(2, grid, gauss_profile(grid.nodes))
        b = AzimuthalMode.from_arrays(3, grid, gauss_profile(grid.nodes))
        assert a.y_inner(b) == 0.0
        assert a.y_norm() > 0.0

    def test_radial_mode_rejects_sine(self, grid):
        with pytest.raises(ValueError):
            AzimuthalMode(0, RadialProfile.zeros(grid), RadialProfile(grid, np.ones_like(grid.nodes)))

    def test_mass(self, grid):
        radial = AzimuthalMode.from_arrays(0, grid, gauss_profile(grid.nodes))
        assert radial.mass() == pytest.approx(1.0, abs=1e-10)
        assert AzimuthalMode.from_arrays(2, grid, gauss_profile(grid.nodes)).mass() == 0.0


class TestMultipoleSeries:
    def test_series_matches_exact_difference(self):
        xi = np.array([[0.2, 0.1], [-0.3, 0.05], [0.0, -0.4]])
        eta = np.array([[1.0, 0.0], [0.3, 0.9], [-0.8, -0.2]])
        v1, _ = v1_v2_split(xi, eta)
        exact = np.sum(xi * v1, axis=-1)
        assert np.allclose(velocity_difference_series(xi, eta, 80), exact, rtol=0.0, atol=1e-13)

    def test_tail_bound(self, rng):
        eta = rng.normal(size=(10_000, 2))
        eta_norm = np.hypot(eta[:, 0], eta[:, 1])
        angles = rng.uniform(0.0, 2.0 * np.pi, 10_000)
        rho = rng.uniform(0.0, 0.5, 10_000)
        xi = (rho * eta_norm)[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        v1, _ = v1_v2_split(xi, eta)
        exact = np.sum(xi * v1, axis=-1)
        for terms in (1, 3, 6):
            partial = velocity_difference_series(xi, eta, terms)
            n = terms + 1
            assert np.all(np.abs(exact - partial) <= rho ** (n + 1) / (1.0 - rho) + 1e-14)

    def test_divergent_ratio(self):
        with pytest.raises(DomainError) as info:
            velocity_difference_series([[1.0, 0.0]], [[0.5, 0.0]], 4)
        assert info.value.details["ratio"] == pytest.approx(2.0)

    def test_v1_v2_identity(self, rng):
        xi = rng.normal(size=(200, 2))
        eta = 3.0 * rng.normal(size=(200, 2))
        v1, v2 = v1_v2_split(xi, eta)
        exact = 2.0 * np.pi * (oseen_velocity(xi + eta) - oseen_velocity(eta))
        assert np.allclose(v1 + v2, exact, rtol=0.0, atol=1e-13)

    def test_split_rejects_zero_eta(self):
        with pytest.raises(SingularityError):
            v1_v2_split([[1.0, 0.0]], [[0.0, 0.0]])

    def test_w_field_is_v1_minus_linear_part(self, rng):
        xi = 0.1 * rng.normal(size=(50, 2))
        eta = rng.normal(size=(50, 2)) + 2.0
        v1, _ = v1_v2_split(xi, eta)
        assert np.allclose(w_field(xi, eta), v1 - strain_counter_term(xi, eta), atol=1e-14)

    def test_w_field_is_quadratic(self):
        eta = np.array([1.0, 0.0])
        direction = np.array([0.6, 0.8])
        ratio = np.linalg.norm(w_field(2e-3 * direction, eta)) / np.linalg.norm(w_field(1e-3 * direction, eta))
        assert ratio == pytest.approx(4.0, rel=0.01)


class TestResiduumTerms:
    @pytest.fixture
    def trajectory(self):
        return static_trajectory([[0.0, 0.0], [0.8, 0.6], [-1.5, 0.4]], [1.0, 0.7, -1.2])

    def test_reduced_forms_match_products(self, trajectory):
        terms = residuum_terms(trajectory, 0, 1.0, 0.01)
        _, _, xi = polar_grid(6.0, 25, 32)
        for name in ("A", "B", "C"):
            assert np.allclose(terms.evaluate(name, xi), terms.evaluate_raw(name, xi), rtol=0.0, atol=1e-14)

    def test_modes_match_closed_forms(self, trajectory, grid):
        terms = residuum_terms(trajectory, 0, 1.0, 0.01, grid)
        _, _, xi = polar_grid(8.0, 33, 24)
        assert np.allclose(terms.A[0].evaluate_xy(xi), terms.evaluate("A", xi), atol=1e-8)
        assert np.allclose(terms.B[1].evaluate_xy(xi), terms.evaluate("B", xi), atol=1e-8)
        assert np.allclose(terms.C[1].evaluate_xy(xi), terms.evaluate("C", xi), atol=1e-8)

    def test_reduced_modes_vanish(self, trajectory, grid):
        terms = residuum_terms(trajectory, 0, 1.0, 0.01, grid)
        assert [mode.n for mode in terms.B] == [1, 3]
        assert [mode.n for mode in terms.C] == [2, 4]
        assert terms.B[0].y_norm() == 0.0
        assert terms.C[0].y_norm() == 0.0

    def test_invariant_under_global_rotation(self, trajectory, grid):
        angle = 0.7
        spun = static_trajectory(rotate(trajectory.positions[0], angle), trajectory.config.circulations)
        terms = residuum_terms(trajectory, 0, 1.0, 0.01, grid)
        rotated = residuum_terms(spun, 0, 1.0, 0.01, grid)
        _, _, xi = polar_grid(6.0, 25, 32)
        for name in ("A", "B", "C"):
            assert np.allclose(rotated.evaluate(name, rotate(xi, angle)), terms.evaluate(name, xi), rtol=0.0, atol=1e-14)
            assert np.allclose(rotated.evaluate_raw(name, rotate(xi, angle)), terms.evaluate_raw(name, xi), rtol=0.0, atol=1e-14)
            assert rotated.modes[name][-1].y_norm() == pytest.approx(terms.modes[name][-1].y_norm(), rel=1e-12)

    def test_vortex_index_checked(self, trajectory):
        with pytest.raises(DomainError):
            residuum_terms(trajectory, 5, 1.0, 0.01)

    def test_strain_is_scaled_jacobian(self, trajectory):
        i, t = 0, 1.0
        z = trajectory.position_at(t)
        alpha = trajectory.config.circulations
        others = [j for j in range(3) if j != i]
        xi = np.array([0.3, -0.7])
        h = 1e-5
        jac = (
            point_vortex_velocity(z[i] + h * xi, z[others], alpha[others])
            - point_vortex_velocity(z[i] - h * xi, z[others], alpha[others])
        ) / (2.0 * h)
        strain = strain_field(trajectory, i, t)
        assert np.allclose(strain(xi), trajectory.d**2 / alpha[i] * jac, rtol=1e-7)
        assert abs(strain.divergence) < 1e-14

    def test_naive_residuum_needs_positive_time(self, trajectory):
        with pytest.raises(DomainError):
            naive_residuum_exact(trajectory, 0, 0.0, 0.01)

    def test_leading_term_is_a(self, trajectory):
        t, nu = 1.0, 1e-5
        residuum = naive_residuum_exact(trajectory, 0, t, nu)
        terms = residuum_terms(trajectory, 0, t, nu * t)
        _, _, xi = polar_grid(5.0, 21, 16)
        eps = nu * t / trajectory.d**2
        difference = residuum.rescaled(xi) - terms.evaluate("A", xi)
        assert np.max(np.abs(difference)) < 10.0 * math.sqrt(eps) * np.max(np.abs(terms.evaluate("A", xi)))


class TestRemainderScaling:
    def test_remainder_exponent(self):
        config = VortexConfiguration(PAIR_POSITIONS, [1.0, 1.0], T=0.5)
        nus = [2e-4, 1e-4, 5e-5, 2.5e-5, 1.25e-5]
        rows = remainder_scaling(config, 0, 0.5, nus, samples=11)
        eps = np.log([row.eps for row in rows])
        sups = np.log([row.sup_weighted_remainder for row in rows])
        slope = np.polyfit(eps, sups, 1)[0]
        assert slope == pytest.approx(1.5, abs=0.1)
