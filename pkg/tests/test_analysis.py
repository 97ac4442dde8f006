"""Tests for profile extraction, weighted norms and the fits."""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.analysis import (
    RescaledProfile,
    azimuthal_project,
    box_doubling_delta,
    convergence_fit,
    extract_rescaled_profile,
    gaussian_field,
    predicted_quadrupole,
    quadrupole_fit,
    rasterize_polar,
    x_norm,
)
from src.exceptions import ExtractionError, FitError
from src.ns_sim import SpectralGrid, VorticityField, run_simulation
from src.point_vortex import VortexConfiguration
from src.profile_solver import quadrupole_template
from src.utils import polar_grid, rotate, wrap_angle

from .conftest import static_trajectory

NU, T = 0.01, 1.0
CENTER = [0.1, -0.05]


def planted_field(func, n: int = 512, L: float = 2.0) -> VorticityField:
    grid = SpectralGrid.build(n, L)
    omega = rasterize_polar(func, grid, CENTER, math.sqrt(NU * T))
    return VorticityField(
        grid=grid,
        layers=np.stack([omega, omega]),
        circulations=np.array([1.0]),
        t=T,
        nu=NU,
        centroid=np.array(CENTER),
    )


def quadrupole_bump(xi):
    xi = np.asarray(xi, dtype=float)
    r2 = np.sum(xi * xi, axis=-1)
    return 0.1 * (xi[..., 0] ** 2 - xi[..., 1] ** 2) * np.exp(-0.25 * r2) / (4.0 * np.pi)


@pytest.fixture(scope="module")
def single_trajectory():
    return static_trajectory([CENTER], [1.0], nu=NU)


class TestExtraction:
    def test_planted_gaussian(self, single_trajectory):
        profile = extract_rescaled_profile(planted_field(gaussian_field), single_trajectory, 0)
        assert profile.mass() == pytest.approx(1.0, rel=1e-6)
        assert np.max(np.abs(profile.values - gaussian_field(profile.points))) < 1e-6

    def test_planted_deformation_norm(self, single_trajectory):
        field = planted_field(lambda xi: gaussian_field(xi) + quadrupole_bump(xi))
        profile = extract_rescaled_profile(field, single_trajectory, 0)
        measured = x_norm(profile.minus(gaussian_field))
        expected = x_norm(replace(profile, values=quadrupole_bump(profile.points)))
        assert measured == pytest.approx(expected, rel=1e-4)

    def test_component_out_of_range(self, single_trajectory):
        with pytest.raises(ExtractionError):
            extract_rescaled_profile(planted_field(gaussian_field), single_trajectory, 0, component=3)

    def test_time_mismatch(self, single_trajectory):
        with pytest.raises(ExtractionError):
            extract_rescaled_profile(planted_field(gaussian_field), single_trajectory, 0, t=0.5)

    def test_radius_beyond_half_box(self, single_trajectory):
        with pytest.raises(ExtractionError) as info:
            extract_rescaled_profile(planted_field(gaussian_field), single_trajectory, 0, r_max=15.0)
        assert info.value.details["box"] == 2.0


class TestXNorm:
    def _profile(self, values_fn) -> RescaledProfile:
        radii, angles, points = polar_grid(10.0, 201, 64)
        return RescaledProfile(0, T, NU, radii, angles, values_fn(points), np.zeros(2), math.sqrt(NU * T))

    def test_beta_range(self):
        profile = self._profile(gaussian_field)
        for beta in (0.0, 1.0):
            with pytest.raises(ValueError):
                x_norm(profile, beta)

    def test_weight_increases_norm(self):
        profile = self._profile(gaussian_field)
        assert x_norm(profile, 0.9) > x_norm(profile, 0.1)

    def test_zero_field(self):
        profile = self._profile(lambda xi: np.zeros(xi.shape[:-1]))
        assert x_norm(profile) == 0.0

    def test_azimuthal_projection(self):
        profile = self._profile(quadrupole_bump)
        mode = azimuthal_project(profile, 2)
        expected = 0.1 * profile.radii**2 * np.exp(-0.25 * profile.radii**2) / (4.0 * np.pi)
        assert np.allclose(mode.c_profile.values, expected, atol=1e-14)
        assert np.allclose(mode.s_profile.values, 0.0, atol=1e-14)

    def test_modes_split_the_norm(self):
        def banded(xi):
            x, y = xi[..., 0], xi[..., 1]
            envelope = np.exp(-0.25 * (x * x + y * y))
            return gaussian_field(xi) + quadrupole_bump(xi) + (0.05 * y + 0.02 * (x**3 - 3.0 * x * y * y)) * envelope

        profile = self._profile(banded)
        parts = []
        for n in range(8):
            mode = azimuthal_project(profile, n)
            values = mode.c_profile.values[:, None] * np.cos(n * profile.angles) + mode.s_profile.values[:, None] * np.sin(
                n * profile.angles
            )
            parts.append(values)
        total = sum(x_norm(replace(profile, values=values)) ** 2 for values in parts)
        assert total == pytest.approx(x_norm(profile) ** 2, rel=1e-10)
        assert x_norm(replace(profile, values=profile.values - sum(parts))) < 1e-12


class TestQuadrupoleFit:
    @pytest.fixture(scope="class")
    def pair(self):
        return static_trajectory([[0.0, 0.0], [0.6, 0.8]], [1.0, 0.5], nu=NU)

    def _planted(self, m: complex) -> RescaledProfile:
        radii, angles, points = polar_grid(10.0, 192, 128)
        omega = quadrupole_template().omega(radii)[:, None]
        values = gaussian_field(points) + np.real(m * omega * np.exp(2j * angles)[None, :])
        return RescaledProfile(0, T, NU, radii, angles, values, np.zeros(2), math.sqrt(NU * T))

    def test_prediction(self, pair):
        m = predicted_quadrupole(pair, 0, T, NU)
        theta_ij = math.atan2(-0.8, -0.6)
        assert abs(m) == pytest.approx(0.5 * NU * T / (4.0 * np.pi), rel=1e-12)
        assert (-np.angle(m)) % (2.0 * np.pi) == pytest.approx((2.0 * theta_ij) % (2.0 * np.pi), abs=1e-12)

    def test_recovers_planted_quadrupole(self, pair):
        m = predicted_quadrupole(pair, 0, T, NU)
        fit = quadrupole_fit(self._planted(m), pair, 0, T, NU)
        assert fit.amplitude_rel_error < 1e-10
        assert fit.phase_error_deg < 1e-8
        assert not fit.phase_undefined

    def test_rotated_quadrupole(self, pair):
        m = predicted_quadrupole(pair, 0, T, NU)
        fit = quadrupole_fit(self._planted(m * np.exp(-2j * math.radians(5.0))), pair, 0, T, NU)
        assert fit.phase_error_deg == pytest.approx(10.0, abs=1e-8)
        assert fit.amplitude_rel_error < 1e-10

    def test_phase_follows_global_rotation(self, pair):
        angle = 0.4
        spun = static_trajectory(rotate(pair.positions[0], angle), pair.config.circulations, nu=NU)
        m = predicted_quadrupole(pair, 0, T, NU)
        assert predicted_quadrupole(spun, 0, T, NU) == pytest.approx(m * np.exp(-2j * angle), abs=1e-15)

        offset = np.exp(-2j * math.radians(5.0))
        fit = quadrupole_fit(self._planted(m * offset), pair, 0, T, NU)
        rotated = quadrupole_fit(self._planted(m * offset * np.exp(-2j * angle)), spun, 0, T, NU)
        assert float(wrap_angle(rotated.phase_measured - fit.phase_measured - 2.0 * angle)) == pytest.approx(0.0, abs=1e-8)
        assert float(wrap_angle(rotated.phase_predicted - fit.phase_predicted - 2.0 * angle)) == pytest.approx(0.0, abs=1e-12)
        assert rotated.phase_error_deg == pytest.approx(fit.phase_error_deg, abs=1e-8)
        assert rotated.amplitude_measured == pytest.approx(fit.amplitude_measured, rel=1e-10)

    def test_degenerate_phase(self, pair):
        fit = quadrupole_fit(self._planted(0j), pair, 0, T, NU)
        assert fit.phase_undefined
        assert math.isnan(fit.phase_error_deg)
        assert fit.amplitude_measured < 1e-12


class TestBoxDoubling:
    def test_wider_box_leaves_profile(self, single_trajectory):
        narrow = planted_field(gaussian_field)
        wide = planted_field(gaussian_field, n=1024, L=4.0)
        assert box_doubling_delta(narrow, wide, single_trajectory, 0) < 1e-8

    def test_measures_profile_change(self, single_trajectory):
        deformed = planted_field(lambda xi: gaussian_field(xi) + quadrupole_bump(xi))
        delta = box_doubling_delta(deformed, planted_field(gaussian_field), single_trajectory, 0)
        profile = extract_rescaled_profile(deformed, single_trajectory, 0)
        assert delta == pytest.approx(x_norm(replace(profile, values=quadrupole_bump(profile.points))), rel=1e-4)

    def test_time_mismatch(self, single_trajectory):
        field = planted_field(gaussian_field)
        with pytest.raises(ExtractionError):
            box_doubling_delta(field, replace(field, t=0.5), single_trajectory, 0)


class TestConvergenceFit:
    NUS = [0.008, 0.004, 0.002, 0.001]

    def test_power_law(self):
        fit = convergence_fit(self.NUS, [2.0 * nu**1.5 for nu in self.NUS])
        assert fit.slope == pytest.approx(1.5, rel=1e-12)
        assert fit.r2 == pytest.approx(1.0)
        assert fit.predict(0.005) == pytest.approx(2.0 * 0.005**1.5, rel=1e-10)

    def test_scale_invariance(self):
        metrics = np.array([3.1e-3, 1.4e-3, 8.0e-4, 3.7e-4])
        assert convergence_fit(self.NUS, metrics).slope == pytest.approx(convergence_fit(self.NUS, 7.0 * metrics).slope)

    @pytest.mark.parametrize(
        "nus, metrics",
        [
            ([0.008, 0.004], [1.0, 0.5]),
            ([0.003, 0.002, 0.001], [1.0, 0.5, 0.2]),
            ([0.008, 0.004, 0.001], [1.0, 0.0, 0.2]),
            ([0.008, 0.004, 0.001], [1.0, 0.5]),
        ],
    )
    def test_rejected_inputs(self, nus, metrics):
        with pytest.raises(FitError):
            convergence_fit(nus, metrics)


@pytest.mark.slow
class TestSingleVortexSimulation:
    def test_stays_gaussian(self, tmp_path):
        config = VortexConfiguration([[0.0, 0.0]], [1.0], nu=NU, T=2.0)
        result = run_simulation(config, 1.0, [2.0], 256, 8.0, out_dir=tmp_path)
        traj = static_trajectory([[0.0, 0.0]], [1.0], nu=NU, T=2.0)
        profile = extract_rescaled_profile(result.fields[-1], traj, 0)
        assert x_norm(profile.minus(gaussian_field)) < 1e-3
        assert profile.mass() == pytest.approx(1.0, rel=1e-6)
