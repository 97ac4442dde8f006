"""Rescaled profile extraction, weighted norms, quadrupole and convergence fits."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy.integrate import simpson
from scipy.ndimage import map_coordinates

from .config import settings
from .exceptions import ExtractionError, FitError
from .expansion import AzimuthalMode, project_modes
from .kernels import RadialGrid, gauss_profile
from .ns_sim import SpectralGrid, VorticityField
from .point_vortex import Trajectory
from .profile_solver import quadrupole_template
from .utils import FloatArray, polar_grid, wrap_angle

logger = logging.getLogger(__name__)

FieldFunction = Callable[[FloatArray], FloatArray]


@dataclass
class RescaledProfile:
    """w_i(xi, t) = (nu t / alpha_i) omega_i(z_i + sqrt(nu t) xi) sampled on a polar grid."""

    i: int
    t: float
    nu: float
    radii: FloatArray
    angles: FloatArray
    values: FloatArray
    center: FloatArray
    scale: float

    @property
    def points(self) -> FloatArray:
        return np.stack(
            [self.radii[:, None] * np.cos(self.angles)[None, :], self.radii[:, None] * np.sin(self.angles)[None, :]],
            axis=-1,
        )

    def radial_integral(self, integrand: FloatArray) -> float:
        """int int integrand r dr dtheta (trapezoid in angle, Simpson in r)."""
        angular = 2.0 * np.pi * np.mean(integrand, axis=1)
        return float(simpson(angular * self.radii, x=self.radii))

    def mass(self) -> float:
        return self.radial_integral(self.values)

    def minus(self, reference: FieldFunction) -> "RescaledProfile":
        """Difference with a field of xi (e.g. G or an approximate solution)."""
        return replace(self, values=self.values - np.asarray(reference(self.points)))


def gaussian_field(xi: npt.ArrayLike) -> FloatArray:
    xi = np.asarray(xi, dtype=float)
    return gauss_profile(np.hypot(xi[..., 0], xi[..., 1]))


def _sample_periodic(values: FloatArray, grid: SpectralGrid, points: FloatArray) -> FloatArray:
    cols = (points[..., 0] + 0.5 * grid.L) / grid.dx
    rows = (points[..., 1] + 0.5 * grid.L) / grid.dx
    return map_coordinates(values, [rows.ravel(), cols.ravel()], order=3, mode="grid-wrap").reshape(rows.shape)


def extract_rescaled_profile(
    field: VorticityField,
    traj: Trajectory,
    i: int,
    t: Optional[float] = None,
    component: Optional[int] = None,
    n_radii: Optional[int] = None,
    n_angles: Optional[int] = None,
    r_max: Optional[float] = None,
) -> RescaledProfile:
    """Bicubic interpolation of omega_component around the trajectory center z_i(t)."""
    t = field.t if t is None else t
    component = i if component is None else component
    n_radii = n_radii or settings.extract_radii
    n_angles = n_angles or settings.extract_angles
    r_max = r_max or settings.extract_radius_max
    if not 0 <= component < field.size:
        raise ExtractionError(f"Component {component} not in field with {field.size} vortices")
    if abs(t - field.t) > 1e-9 * max(1.0, abs(t)):
        raise ExtractionError(f"Snapshot at t={field.t} does not match requested t={t}")

    scale = math.sqrt(field.nu * t)
    if r_max * scale > 0.5 * field.grid.L:
        raise ExtractionError(
            f"Extraction radius {r_max * scale:.4g} exceeds half the box {0.5 * field.grid.L:.4g}",
            details={"radius": r_max * scale, "box": field.grid.L},
        )
    center = traj.position_at(t)[i]
    radii, angles, xi = polar_grid(r_max, n_radii, n_angles)
    omega = _sample_periodic(field.components[component], field.grid, center + scale * xi)
    alpha = float(field.circulations[i])
    return RescaledProfile(
        i=i, t=t, nu=field.nu, radii=radii, angles=angles,
        values=field.nu * t / alpha * omega, center=center, scale=scale,
    )


def rasterize_polar(
    func: FieldFunction, grid: SpectralGrid, center: npt.ArrayLike, scale: float, alpha: float = 1.0
) -> FloatArray:
    """Physical vorticity (alpha / scale^2) func((x - center) / scale), nearest image."""
    center = np.asarray(center, dtype=float)
    dx = (grid.X - center[0] + 0.5 * grid.L) % grid.L - 0.5 * grid.L
    dy = (grid.Y - center[1] + 0.5 * grid.L) % grid.L - 0.5 * grid.L
    return alpha / scale**2 * np.asarray(func(np.stack([dx, dy], axis=-1) / scale))


def x_norm(profile: RescaledProfile, beta: Optional[float] = None) -> float:
    """(int |w|^2 e^{beta |xi| / 4} d xi)^{1/2} by polar quadrature."""
    beta = settings.x_norm_beta if beta is None else beta
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    weight = np.exp(0.25 * beta * profile.radii)[:, None]
    return math.sqrt(max(profile.radial_integral(profile.values**2 * weight), 0.0))


def box_doubling_delta(
    field: VorticityField, doubled: VorticityField, traj: Trajectory, i: int, beta: Optional[float] = None
) -> float:
    """X-norm distance between the profiles of vortex i in a run and its rerun in a wider box."""
    if abs(field.t - doubled.t) > 1e-9 * max(1.0, abs(field.t)):
        raise ExtractionError(f"Snapshots at t={field.t} and t={doubled.t} cannot be compared")
    reference = extract_rescaled_profile(field, traj, i)
    wide = extract_rescaled_profile(doubled, traj, i, field.t)
    return x_norm(replace(reference, values=reference.values - wide.values), beta)


def azimuthal_project(profile: RescaledProfile, n: int) -> AzimuthalMode:
    """Cos/sin profiles of mode n on the extraction radii."""
    grid = RadialGrid.uniform(profile.radii.size, float(profile.radii[-1]))
    c, s = project_modes(profile.values, n)
    return AzimuthalMode.from_arrays(n, grid, c, s)


@dataclass
class QuadrupoleFit:
    """Measured and predicted amplitude and doubled-angle phase of the m = 2 deformation."""

    amplitude_measured: float
    amplitude_predicted: float
    phase_measured: float
    phase_predicted: float
    phase_undefined: bool = False

    @property
    def amplitude_rel_error(self) -> float:
        return abs(self.amplitude_measured - self.amplitude_predicted) / abs(self.amplitude_predicted)

    @property
    def phase_error_deg(self) -> float:
        if self.phase_undefined:
            return float("nan")
        return abs(float(wrap_angle(self.phase_measured - self.phase_predicted))) * 180.0 / np.pi


def predicted_quadrupole(traj: Trajectory, i: int, t: float, nu: float) -> complex:
    """m = sum_j (alpha_j / alpha_i) nu t / (4 pi |z_ij|^2) e^{-2 i theta_ij}; field Re(m omega(r) e^{2 i theta})."""
    z = traj.position_at(t)
    alpha = traj.config.circulations
    total = 0j
    for j in range(traj.config.size):
        if j == i:
            continue
        rel = z[i] - z[j]
        total += alpha[j] / alpha[i] * nu * t / (4.0 * np.pi * float(rel @ rel)) * np.exp(
            -2j * math.atan2(rel[1], rel[0])
        )
    return complex(total)


def quadrupole_fit(
    profile: RescaledProfile, traj: Trajectory, i: int, t: float, nu: float, degenerate_tolerance: float = 1e-12
) -> QuadrupoleFit:
    """Least-squares fit of P2 w_i against the omega(r) template, compared with the pair prediction.

    Phases are doubled angles -arg(m) in [0, 2 pi); for a single pair the prediction is 2 theta_ij.
    """
    mode = azimuthal_project(profile, 2)
    template = quadrupole_template().omega(profile.radii)
    weight = profile.radii
    norm = float(simpson(template**2 * weight, x=profile.radii))
    a = float(simpson(mode.c_profile.values * template * weight, x=profile.radii)) / norm
    b = float(simpson(mode.s_profile.values * template * weight, x=profile.radii)) / norm
    measured = complex(a, -b)
    predicted = predicted_quadrupole(traj, i, t, nu)

    scale = max(float(np.max(np.abs(profile.values))), 1e-300)
    undefined = abs(measured) < degenerate_tolerance * scale or abs(predicted) == 0.0
    if undefined:
        logger.warning(f"Quadrupole of vortex {i} at t={t:.4g} is degenerate; phase undefined")

    def phase(m: complex) -> float:
        return float(-np.angle(m) % (2.0 * np.pi)) if m != 0 else float("nan")

    return QuadrupoleFit(
        amplitude_measured=abs(measured),
        amplitude_predicted=abs(predicted),
        phase_measured=float("nan") if undefined else phase(measured),
        phase_predicted=phase(predicted),
        phase_undefined=undefined,
    )


@dataclass
class FitResult:
    """Least-squares line through (log nu, log metric)."""

    slope: float
    intercept: float
    r2: float

    def predict(self, nu: npt.ArrayLike) -> FloatArray:
        return np.exp(self.intercept) * np.asarray(nu, dtype=float) ** self.slope


def convergence_fit(nus: Sequence[float], metrics: Sequence[float], min_points: int = 3, min_span: float = 4.0) -> FitResult:
    """Slope of log(metric) against log(nu)."""
    x = np.asarray(nus, dtype=float)
    y = np.asarray(metrics, dtype=float)
    if x.size != y.size:
        raise FitError(f"Got {x.size} abscissae for {y.size} metrics")
    if x.size < min_points:
        raise FitError(f"Need at least {min_points} points, got {x.size}", details={"points": int(x.size)})
    if np.any(x <= 0.0) or np.any(y <= 0.0) or not np.all(np.isfinite(y)):
        raise FitError("Convergence fit needs positive finite values", details={"metrics": y.tolist()})
    span = float(x.max() / x.min())
    if span < min_span:
        raise FitError(f"Abscissae span {span:.3g}x, need {min_span}x", details={"span": span})

    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    total = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual**2)) / total if total > 0.0 else 1.0
    return FitResult(float(slope), float(intercept), r2)
