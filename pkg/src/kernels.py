"""Lamb-Oseen profiles, radial quadrature and the planar Biot-Savart law."""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .config import settings
from .exceptions import QuadratureError, SingularityError
from .utils import FloatArray, perp

logger = logging.getLogger(__name__)

# A planar vector (or a batch of them) is an array whose last axis has length 2.
PlanarVector = FloatArray

# Below r^2 = 1e-2 the removable singularities are evaluated by their series.
TAYLOR_SWITCH_R2 = 1e-2

ArrayOrFloat = Union[float, FloatArray]


def gauss_profile(r: npt.ArrayLike) -> ArrayOrFloat:
    """Lamb-Oseen vorticity profile g(r) = exp(-r^2/4) / (4 pi), unit mass."""
    r = np.asarray(r, dtype=float)
    return np.exp(-0.25 * r * r) / (4.0 * np.pi)


def _one_minus_exp_over_x(x: FloatArray) -> FloatArray:
    """(1 - e^{-x}) / x with a series near 0."""
    out = np.empty_like(x)
    small = x < 0.25 * TAYLOR_SWITCH_R2
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs**2 / 6.0 - xs**3 / 24.0 + xs**4 / 120.0
    xl = x[~small]
    out[~small] = -np.expm1(-xl) / xl
    return out


def oseen_velocity(xi: npt.ArrayLike) -> PlanarVector:
    """Velocity v^G(xi) = xi^perp (1 - e^{-|xi|^2/4}) / (2 pi |xi|^2) of the unit Oseen vortex."""
    xi = np.asarray(xi, dtype=float)
    r2 = np.sum(xi * xi, axis=-1)
    factor = _one_minus_exp_over_x(np.atleast_1d(0.25 * r2)).reshape(np.shape(r2))
    return perp(xi) * (factor / (8.0 * np.pi))[..., None]


def oseen_vorticity(x: npt.ArrayLike, alpha: float, nu_t: float) -> ArrayOrFloat:
    """Dimensional Oseen vorticity (alpha / nu t) g(|x| / sqrt(nu t))."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    return alpha / (4.0 * np.pi * nu_t) * np.exp(-0.25 * r2 / nu_t)


def phi_h_profiles(r: npt.ArrayLike) -> Tuple[ArrayOrFloat, ArrayOrFloat]:
    """Angular velocity phi(r) of the Oseen vortex and the ratio h = g / (2 phi)."""
    r = np.asarray(r, dtype=float)
    x = np.atleast_1d(0.25 * r * r).astype(float)
    phi = _one_minus_exp_over_x(x) / (8.0 * np.pi)

    h = np.empty_like(x)
    small = x < 0.25 * TAYLOR_SWITCH_R2
    xs = x[small]
    h[small] = 1.0 - xs / 2.0 + xs**2 / 12.0 - xs**4 / 720.0
    xl = x[~small]
    h[~small] = xl * np.exp(-xl) / -np.expm1(-xl)

    if r.ndim == 0:
        return float(phi[0]), float(h[0])
    return phi.reshape(r.shape), h.reshape(r.shape)


def sup_r2h() -> Tuple[float, float]:
    """Maximum of r^2 h(r) over r > 0 and its location."""
    result = minimize_scalar(
        lambda r: -(r * r) * phi_h_profiles(r)[1],
        bounds=(0.5, 8.0),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(-result.fun), float(result.x)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Graded radial grid, uniform in s = r / (1 + r / c).

    Integrals are taken with Simpson's rule in s using the analytic Jacobian dr/ds.
    """

    nodes: FloatArray
    s: FloatArray
    ds: float
    stretch: float
    jacobian: FloatArray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @classmethod
    def build(
        cls,
        size: Optional[int] = None,
        r_max: Optional[float] = None,
        stretch: Optional[float] = None,
        validate: bool = True,
    ) -> "RadialGrid":
        """Build a grid; ``validate`` runs the cubic interpolation and mass checks."""
        size = size or settings.radial_nodes
        r_max = r_max or settings.radial_max
        stretch = stretch or settings.radial_stretch
        if size < 16:
            raise QuadratureError(f"Radial grid needs at least 16 nodes, got {size}")

        s_max = r_max / (1.0 + r_max / stretch)
        s = np.linspace(0.0, s_max, size)
        nodes = s / (1.0 - s / stretch)
        nodes[-1] = r_max
        jacobian = 1.0 / (1.0 - s / stretch) ** 2
        grid = cls(nodes=nodes, s=s, ds=float(s[1] - s[0]), stretch=stretch, jacobian=jacobian)
        if validate:
            grid.validate()
        return grid

    @classmethod
    def default(cls) -> "RadialGrid":
        return _default_grid()

    @classmethod
    def uniform(cls, size: int, r_max: float) -> "RadialGrid":
        """Equispaced nodes on [0, r_max] (no grading, no resolution check)."""
        return cls.build(size, r_max, stretch=np.inf, validate=False)

    def validate(self, tolerance: float = 1e-10, mass_tolerance: float = 1e-12) -> None:
        """Check that the node density resolves the Oseen profile."""
        g = gauss_profile(self.nodes)
        mid_s = 0.5 * (self.s[1:] + self.s[:-1])
        mid_r = mid_s / (1.0 - mid_s / self.stretch)
        spline_error = float(np.max(np.abs(CubicSpline(self.nodes, g)(mid_r) - gauss_profile(mid_r))))
        if spline_error > tolerance:
            raise QuadratureError(
                "Radial grid too coarse for cubic interpolation of g",
                estimate=spline_error,
                tolerance=tolerance,
            )

        mass_error = abs(self.mass(g) - 1.0)
        if mass_error > mass_tolerance:
            raise QuadratureError(
                "Radial grid fails the unit-mass check of g",
                estimate=mass_error,
                tolerance=mass_tolerance,
            )
        logger.debug(f"Radial grid validated: M={self.size}, spline={spline_error:.2e}, mass={mass_error:.2e}")

    def integrate(self, values: npt.ArrayLike) -> float:
        """Integral over [0, r_max] of ``values`` dr (Richardson-extrapolated Simpson)."""
        total, _ = self.integrate_with_error(values)
        return total

    def integrate_with_error(self, values: npt.ArrayLike) -> Tuple[float, float]:
        """Integral and its Richardson self-estimate (fine grid vs every other node)."""
        f = np.asarray(values, dtype=float) * self.jacobian
        odd = self.size if self.size % 2 == 1 else self.size - 1
        fine = simpson(f[:odd], dx=self.ds)
        coarse = simpson(f[:odd:2], dx=2.0 * self.ds)
        tail = 0.0 if odd == self.size else 0.5 * self.ds * (f[-2] + f[-1])
        return float(fine + (fine - coarse) / 15.0 + tail), float(abs(fine - coarse) / 15.0)

    def cumulative(self, values: npt.ArrayLike) -> FloatArray:
        """Running integral from 0 to each node."""
        f = np.asarray(values, dtype=float) * self.jacobian
        return cumulative_simpson(f, dx=self.ds, initial=0.0)

    def cumulative_tail(self, values: npt.ArrayLike) -> FloatArray:
        """Running integral from each node to r_max."""
        f = np.asarray(values, dtype=float) * self.jacobian
        return cumulative_simpson(f[::-1], dx=self.ds, initial=0.0)[::-1]

    def cumulative_error(self, values: npt.ArrayLike) -> float:
        """Self-estimate of :meth:`cumulative` from the every-other-node grid."""
        f = np.asarray(values, dtype=float) * self.jacobian
        fine = cumulative_simpson(f, dx=self.ds, initial=0.0)[::2]
        coarse = cumulative_simpson(f[::2], dx=2.0 * self.ds, initial=0.0)
        return float(np.max(np.abs(fine - coarse)) / 15.0)

    def mass(self, values: npt.ArrayLike) -> float:
        """Total mass 2 pi int s f(s) ds of a radial function."""
        return 2.0 * np.pi * self.integrate(self.nodes * np.asarray(values, dtype=float))


@lru_cache(maxsize=1)
def _default_grid() -> RadialGrid:
    return RadialGrid.build()


@dataclass
class RadialProfile:
    """A function of r sampled on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: FloatArray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError(f"Profile has {self.values.shape} samples for a grid of {self.grid.size}")

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialProfile":
        return cls(grid, np.zeros_like(grid.nodes))

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "RadialProfile":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))

    @property
    def nodes(self) -> FloatArray:
        return self.grid.nodes

    def __call__(self, r: npt.ArrayLike) -> FloatArray:
        """Cubic interpolation; zero beyond r_max."""
        r = np.asarray(r, dtype=float)
        out = _spline(self)(np.clip(r, 0.0, self.grid.r_max))
        return np.where(r > self.grid.r_max, 0.0, out)

    def __add__(self, other: "RadialProfile") -> "RadialProfile":
        return RadialProfile(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialProfile") -> "RadialProfile":
        return RadialProfile(self.grid, self.values - other.values)

    def __mul__(self, factor: float) -> "RadialProfile":
        return RadialProfile(self.grid, self.values * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "RadialProfile":
        return RadialProfile(self.grid, -self.values)

    def mass(self) -> float:
        return self.grid.mass(self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _spline(profile: RadialProfile) -> CubicSpline:
    return CubicSpline(profile.grid.nodes, profile.values)


def biot_savart_radial(w: RadialProfile, tolerance: float = 1e-8) -> RadialProfile:
    """Azimuthal speed v_theta(r) = (1/r) int_0^r s w(s) ds of a radial vorticity."""
    grid = w.grid
    integrand = grid.nodes * w.values
    circulation = grid.cumulative(integrand)
    scale = max(float(np.max(np.abs(circulation))), 1e-300)
    estimate = grid.cumulative_error(integrand) / scale
    if estimate > tolerance:
        raise QuadratureError(
            "Radial Biot-Savart quadrature self-estimate exceeds tolerance",
            estimate=estimate,
            tolerance=tolerance,
        )

    speed = np.zeros_like(circulation)
    speed[1:] = circulation[1:] / grid.nodes[1:]
    return RadialProfile(grid, speed)


def biot_savart_radial_outer(w: RadialProfile) -> RadialProfile:
    """Outer form -(1/r) int_r^inf s w(s) ds, equal to the inner form for zero-mean w."""
    grid = w.grid
    tail = grid.cumulative_tail(grid.nodes * w.values)
    speed = np.zeros_like(tail)
    speed[1:] = -tail[1:] / grid.nodes[1:]
    return RadialProfile(grid, speed)


def point_vortex_velocity(
    eval_at: npt.ArrayLike,
    centers: Sequence[Sequence[float]],
    circulations: Sequence[float],
) -> PlanarVector:
    """Velocity sum_j (alpha_j / 2 pi) (x - x_j)^perp / |x - x_j|^2 of point vortices."""
    x = np.asarray(eval_at, dtype=float)
    centers_arr = np.asarray(centers, dtype=float).reshape(-1, 2)
    alphas = np.asarray(circulations, dtype=float)

    diff = x[..., None, :] - centers_arr
    r2 = np.sum(diff * diff, axis=-1)
    if np.any(r2 == 0.0):
        hit = np.argwhere(r2 == 0.0)[0]
        raise SingularityError(
            "Point-vortex velocity evaluated at a vortex center",
            indices=tuple(int(k) for k in hit),
        )
    weights = alphas / (2.0 * np.pi * r2)
    return np.sum(perp(diff) * weights[..., None], axis=-2)
