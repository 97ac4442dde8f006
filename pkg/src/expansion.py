"""Multipole expansion of the interaction velocity and the residuum terms A, B, C."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from .config import settings
from .exceptions import AliasingError, DomainError, SingularityError
from .kernels import RadialGrid, RadialProfile, gauss_profile, oseen_velocity
from .point_vortex import Trajectory, VortexConfiguration, System, integrate
from .utils import FloatArray, perp, polar_grid

logger = logging.getLogger(__name__)


@dataclass
class AzimuthalMode:
    """Angular mode c(r) cos(n theta) + s(r) sin(n theta) on a radial grid."""

    n: int
    c_profile: RadialProfile
    s_profile: RadialProfile

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"Mode number must be non-negative, got {self.n}")
        if self.n == 0 and np.any(self.s_profile.values != 0.0):
            raise ValueError("Radial (n = 0) modes carry no sine component")

    @property
    def grid(self) -> RadialGrid:
        return self.c_profile.grid

    @classmethod
    def zeros(cls, n: int, grid: RadialGrid) -> "AzimuthalMode":
        return cls(n, RadialProfile.zeros(grid), RadialProfile.zeros(grid))

    @classmethod
    def from_arrays(cls, n: int, grid: RadialGrid, c: npt.ArrayLike, s: Optional[npt.ArrayLike] = None) -> "AzimuthalMode":
        s_values = np.zeros_like(grid.nodes) if s is None or n == 0 else s
        return cls(n, RadialProfile(grid, np.asarray(c, dtype=float)), RadialProfile(grid, np.asarray(s_values, dtype=float)))

    @classmethod
    def from_complex(cls, n: int, grid: RadialGrid, u: npt.ArrayLike) -> "AzimuthalMode":
        """Mode whose field is Re(u(r) e^{i n theta})."""
        u = np.asarray(u, dtype=complex)
        return cls.from_arrays(n, grid, u.real, -u.imag)

    def as_complex(self) -> FloatArray:
        return self.c_profile.values - 1j * self.s_profile.values

    def rotated(self, angle: float) -> "AzimuthalMode":
        """The mode of theta -> f(theta - angle)."""
        return AzimuthalMode.from_complex(self.n, self.grid, self.as_complex() * np.exp(-1j * self.n * angle))

    def __add__(self, other: "AzimuthalMode") -> "AzimuthalMode":
        if other.n != self.n:
            raise ValueError(f"Cannot add modes {self.n} and {other.n}")
        return AzimuthalMode(self.n, self.c_profile + other.c_profile, self.s_profile + other.s_profile)

    def __sub__(self, other: "AzimuthalMode") -> "AzimuthalMode":
        return self + (-other)

    def __mul__(self, factor: float) -> "AzimuthalMode":
        return AzimuthalMode(self.n, self.c_profile * factor, self.s_profile * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "AzimuthalMode":
        return self * -1.0

    def evaluate(self, r: npt.ArrayLike, theta: npt.ArrayLike) -> FloatArray:
        """Field value at polar points; cubic in r, zero beyond r_max."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        value = self.c_profile(r) * np.cos(self.n * theta)
        if self.n > 0:
            value = value + self.s_profile(r) * np.sin(self.n * theta)
        return value

    def evaluate_xy(self, xi: npt.ArrayLike) -> FloatArray:
        xi = np.asarray(xi, dtype=float)
        return self.evaluate(np.hypot(xi[..., 0], xi[..., 1]), np.arctan2(xi[..., 1], xi[..., 0]))

    def _radial_weight(self) -> float:
        return 2.0 * np.pi if self.n == 0 else np.pi

    def y_inner(self, other: "AzimuthalMode") -> float:
        """Inner product int int u w e^{|xi|^2/4} d xi (orthogonal across modes)."""
        if other.n != self.n:
            return 0.0
        grid = self.grid
        weight = grid.nodes * np.exp(0.25 * grid.nodes**2)
        integrand = self.c_profile.values * other.c_profile.values + self.s_profile.values * other.s_profile.values
        return self._radial_weight() * grid.integrate(integrand * weight)

    def y_norm(self) -> float:
        return math.sqrt(max(self.y_inner(self), 0.0))

    def mass(self) -> float:
        return self.c_profile.mass() if self.n == 0 else 0.0


def project_modes(values: npt.ArrayLike, n: int) -> Tuple[FloatArray, FloatArray]:
    """Cos/sin coefficients of mode n from samples on equispaced angles (last axis).

    Trapezoid quadrature in the angle, exact for band-limited data.
    """
    values = np.asarray(values, dtype=float)
    n_angles = values.shape[-1]
    if n < 0 or n_angles < max(4 * n, 1) or 2 * n >= n_angles:
        raise AliasingError(f"{n_angles} angles cannot resolve mode {n}", mode=n)
    spectrum = np.fft.rfft(values, axis=-1)[..., n]
    if n == 0:
        return spectrum.real / n_angles, np.zeros(values.shape[:-1])
    return 2.0 * spectrum.real / n_angles, -2.0 * spectrum.imag / n_angles


def _check_pair(xi: FloatArray, eta: FloatArray) -> None:
    if np.any(np.sum(eta * eta, axis=-1) == 0.0):
        raise SingularityError("eta must be nonzero")
    s = xi + eta
    if np.any(np.sum(s * s, axis=-1) == 0.0):
        raise SingularityError("xi + eta must be nonzero")


def velocity_difference_series(xi: npt.ArrayLike, eta: npt.ArrayLike, terms: int) -> FloatArray:
    """Partial sum sum_{n=2}^{terms+1} (-1)^{n-1} rho^n sin(n(theta - phi)) approximating xi . V1."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    r_xi = np.hypot(xi[..., 0], xi[..., 1])
    r_eta = np.hypot(eta[..., 0], eta[..., 1])
    if np.any(r_eta == 0.0):
        raise SingularityError("eta must be nonzero")
    rho = r_xi / r_eta
    if np.any(rho >= 1.0):
        raise DomainError("Multipole series diverges for |xi| >= |eta|", ratio=float(np.max(rho)))

    delta = np.arctan2(eta[..., 0] * xi[..., 1] - eta[..., 1] * xi[..., 0], np.sum(xi * eta, axis=-1))
    total = np.zeros_like(rho)
    for n in range(2, terms + 2):
        total = total + (-1.0) ** (n - 1) * rho**n * np.sin(n * delta)
    return total


def v1_v2_split(xi: npt.ArrayLike, eta: npt.ArrayLike) -> Tuple[FloatArray, FloatArray]:
    """Split 2 pi (v^G(xi + eta) - v^G(eta)) into the point-vortex part V1 and the Gaussian part V2."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    _check_pair(xi, eta)
    s = xi + eta
    s2 = np.sum(s * s, axis=-1)[..., None]
    e2 = np.sum(eta * eta, axis=-1)[..., None]
    v1 = perp(s) / s2 - perp(eta) / e2
    v2 = perp(eta) * np.exp(-0.25 * e2) / e2 - perp(s) * np.exp(-0.25 * s2) / s2
    return v1, v2


def strain_counter_term(xi: npt.ArrayLike, eta: npt.ArrayLike) -> FloatArray:
    """Linear-in-xi part xi^perp / |eta|^2 - 2 (xi . eta) eta^perp / |eta|^4 of V1."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    e2 = np.sum(eta * eta, axis=-1)[..., None]
    dot = np.sum(xi * eta, axis=-1)[..., None]
    return perp(xi) / e2 - 2.0 * dot * perp(eta) / e2**2


def w_field(xi: npt.ArrayLike, eta: npt.ArrayLike) -> FloatArray:
    """W = V1 minus its linear part; |W| = O(|xi|^2 / |eta|^3)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    _check_pair(xi, eta)
    s = xi + eta
    s2 = np.sum(s * s, axis=-1)[..., None]
    e2 = np.sum(eta * eta, axis=-1)[..., None]
    dot = np.sum(xi * eta, axis=-1)[..., None]
    return perp(s) / s2 - perp(s) / e2 + 2.0 * dot * perp(eta) / e2**2


def _pair_geometry(traj: Trajectory, i: int, t: float) -> Tuple[List[FloatArray], List[float], List[float]]:
    n = traj.config.size
    if not 0 <= i < n:
        raise DomainError(f"Vortex index {i} out of range for N={n}", details={"index": i})
    z = traj.position_at(t)
    alpha = traj.config.circulations
    rel, thetas, weights = [], [], []
    for j in range(n):
        if j == i:
            continue
        z_ij = z[i] - z[j]
        if not np.any(z_ij):
            raise SingularityError(f"Vortices {i} and {j} coincide at t={t}", indices=(i, j))
        rel.append(z_ij)
        thetas.append(math.atan2(z_ij[1], z_ij[0]))
        weights.append(float(alpha[j] / alpha[i]))
    return rel, thetas, weights


def _pair_mode(grid: RadialGrid, n: int, coefficients: Sequence[float], phases: Sequence[float]) -> AzimuthalMode:
    """Mode of sum_j k_j r^n g(r) sin(n (theta - phi_j))."""
    radial = grid.nodes**n * gauss_profile(grid.nodes)
    c = -sum(k * math.sin(n * p) for k, p in zip(coefficients, phases))
    s = sum(k * math.cos(n * p) for k, p in zip(coefficients, phases))
    return AzimuthalMode.from_arrays(n, grid, c * radial, s * radial)


@dataclass
class ExpansionTerms:
    """Residuum terms A_i (n = 2), B_i (n = 1, 3) and C_i (n = 2, 4) at one time."""

    i: int
    t: float
    nu_t: float
    d: float
    z_rel: List[FloatArray]
    thetas: List[float]
    weights: List[float]
    modes: Dict[str, List[AzimuthalMode]] = field(repr=False)

    # Order of each term in the reduced form k_j r^n g sin(n (theta - theta_ij)).
    ORDERS = {"A": 2, "B": 3, "C": 4}
    PREFACTORS = {"A": 1.0, "B": -1.0, "C": 1.0}

    @property
    def A(self) -> List[AzimuthalMode]:
        return self.modes["A"]

    @property
    def B(self) -> List[AzimuthalMode]:
        return self.modes["B"]

    @property
    def C(self) -> List[AzimuthalMode]:
        return self.modes["C"]

    def coefficients(self, name: str) -> List[float]:
        n = self.ORDERS[name]
        return [
            self.PREFACTORS[name] * self.d**n / (4.0 * np.pi) * w / float(np.hypot(*z)) ** n
            for z, w in zip(self.z_rel, self.weights)
        ]

    def evaluate(self, name: str, xi: npt.ArrayLike) -> FloatArray:
        """Closed-form value of A, B or C at xi (trig-reduced form)."""
        xi = np.asarray(xi, dtype=float)
        n = self.ORDERS[name]
        r = np.hypot(xi[..., 0], xi[..., 1])
        theta = np.arctan2(xi[..., 1], xi[..., 0])
        radial = r**n * gauss_profile(r)
        total = np.zeros_like(r)
        for k, phase in zip(self.coefficients(name), self.thetas):
            total = total + k * np.sin(n * (theta - phase))
        return total * radial

    def evaluate_raw(self, name: str, xi: npt.ArrayLike) -> FloatArray:
        """Product form of A, B or C before the multiple-angle reduction."""
        xi = np.asarray(xi, dtype=float)
        r2 = np.sum(xi * xi, axis=-1)
        g = gauss_profile(np.sqrt(r2))
        total = np.zeros_like(r2)
        for z, w in zip(self.z_rel, self.weights):
            z2 = float(z @ z)
            dot = xi @ z
            cross = xi @ perp(z)
            if name == "A":
                term = self.d**2 / (2.0 * np.pi) * dot * cross / z2**2
            elif name == "B":
                term = self.d**3 / (4.0 * np.pi) * cross * (r2 * z2 - 4.0 * dot**2) / z2**3
            elif name == "C":
                term = self.d**4 / np.pi * dot * cross * (2.0 * dot**2 - r2 * z2) / z2**4
            else:
                raise ValueError(f"Unknown residuum term {name}")
            total = total + w * term
        return total * g


def residuum_terms(traj: Trajectory, i: int, t: float, nu_t: float, grid: Optional[RadialGrid] = None) -> ExpansionTerms:
    """Build A_i, B_i, C_i from the relative positions z_ij(t)."""
    grid = grid or RadialGrid.default()
    rel, thetas, weights = _pair_geometry(traj, i, t)
    terms = ExpansionTerms(
        i=i, t=t, nu_t=nu_t, d=traj.d, z_rel=rel, thetas=thetas, weights=weights, modes={}
    )
    terms.modes["A"] = [_pair_mode(grid, 2, terms.coefficients("A"), thetas)]
    # The n = 1 part of B and the n = 2 part of C vanish identically after reduction.
    terms.modes["B"] = [AzimuthalMode.zeros(1, grid), _pair_mode(grid, 3, terms.coefficients("B"), thetas)]
    terms.modes["C"] = [AzimuthalMode.zeros(2, grid), _pair_mode(grid, 4, terms.coefficients("C"), thetas)]
    return terms


@dataclass
class StrainField:
    """Linear strain D_i(xi) = M xi felt by vortex i."""

    matrix: FloatArray

    def __call__(self, xi: npt.ArrayLike) -> FloatArray:
        xi = np.asarray(xi, dtype=float)
        return xi @ self.matrix.T

    @property
    def divergence(self) -> float:
        return float(np.trace(self.matrix))


def strain_field(traj: Trajectory, i: int, t: float) -> StrainField:
    """D_i(xi) = (1/2 pi) sum_j (alpha_j/alpha_i)(d^2/|z_ij|^4)(xi^perp |z_ij|^2 - 2 (xi . z_ij) z_ij^perp)."""
    rel, _, weights = _pair_geometry(traj, i, t)
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    matrix = np.zeros((2, 2))
    for z, w in zip(rel, weights):
        z2 = float(z @ z)
        matrix += w * traj.d**2 / z2**2 * (z2 * rotation - 2.0 * np.outer(perp(z), z))
    return StrainField(matrix / (2.0 * np.pi))


@dataclass
class NaiveResiduum:
    """Exact residuum R_i^(0) of the superposed Oseen vortices, as a field of xi."""

    i: int
    t: float
    nu: float
    d: float
    alpha_i: float
    etas: List[FloatArray]
    alphas: List[float]

    def __call__(self, xi: npt.ArrayLike) -> FloatArray:
        xi = np.asarray(xi, dtype=float)
        grad_g = -0.5 * xi * gauss_profile(np.hypot(xi[..., 0], xi[..., 1]))[..., None]
        total = np.zeros(xi.shape[:-1])
        for eta, a in zip(self.etas, self.alphas):
            diff = oseen_velocity(xi + eta) - oseen_velocity(eta)
            total = total + (a / self.nu) * np.sum(diff * grad_g, axis=-1)
        return total

    def rescaled(self, xi: npt.ArrayLike) -> FloatArray:
        """(d^2 / alpha_i t) R_i^(0)."""
        return self.d**2 / (self.alpha_i * self.t) * self(xi)


def naive_residuum_exact(traj: Trajectory, i: int, t: float, nu: float) -> NaiveResiduum:
    """R_i^(0)(xi, t) = sum_j (alpha_j/nu){v^G(xi + z_ij/sqrt(nu t)) - v^G(z_ij/sqrt(nu t))} . grad G."""
    if nu <= 0.0 or t <= 0.0:
        raise DomainError(f"Residuum needs nu > 0 and t > 0, got nu={nu}, t={t}")
    rel, _, _ = _pair_geometry(traj, i, t)
    alpha = traj.config.circulations
    others = [j for j in range(traj.config.size) if j != i]
    scale = math.sqrt(nu * t)
    return NaiveResiduum(
        i=i,
        t=t,
        nu=nu,
        d=traj.d,
        alpha_i=float(alpha[i]),
        etas=[z / scale for z in rel],
        alphas=[float(alpha[j]) for j in others],
    )


def weighted_remainder(
    traj: Trajectory,
    i: int,
    t: float,
    nu: float,
    gamma: Optional[float] = None,
    n_radii: Optional[int] = None,
    n_angles: Optional[int] = None,
    r_max: Optional[float] = None,
) -> float:
    """sup over the polar check grid of |R~ e^{gamma |xi|^2 / 4}|."""
    gamma = settings.remainder_gamma if gamma is None else gamma
    _, _, xi = polar_grid(
        r_max or settings.check_radius_max,
        n_radii or settings.check_radii,
        n_angles or settings.check_angles,
    )
    nu_t = nu * t
    eps = nu_t / traj.d**2
    terms = residuum_terms(traj, i, t, nu_t)
    residuum = naive_residuum_exact(traj, i, t, nu)
    remainder = (
        residuum.rescaled(xi)
        - terms.evaluate("A", xi)
        - math.sqrt(eps) * terms.evaluate("B", xi)
        - eps * terms.evaluate("C", xi)
    )
    weight = np.exp(0.25 * gamma * np.sum(xi * xi, axis=-1))
    return float(np.max(np.abs(remainder * weight)))


@dataclass
class RemainderRow:
    nu: float
    t: float
    eps: float
    sup_weighted_remainder: float


def remainder_scaling(
    config: VortexConfiguration,
    i: int,
    t: float,
    nus: Sequence[float],
    gamma: Optional[float] = None,
    samples: int = 101,
) -> List[RemainderRow]:
    """Weighted remainder at time t for each viscosity, along the matching PW2 trajectory."""
    rows = []
    for nu in nus:
        traj = integrate(config.with_nu(nu), System.PW2, samples)
        sup = weighted_remainder(traj, i, t, nu, gamma)
        rows.append(RemainderRow(nu=float(nu), t=float(t), eps=nu * t / traj.d**2, sup_weighted_remainder=sup))
        logger.debug(f"Remainder for vortex {i}, nu={nu:.3e}: {sup:.3e}")
    return rows
