"""Helmholtz-Kirchhoff point-vortex dynamics and its viscous regularization."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.integrate import OdeSolution, solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .config import settings
from .exceptions import (
    ConfigurationError,
    DomainError,
    IntegrationError,
    SingularityError,
    TrajectoryMismatchError,
)
from .kernels import oseen_velocity
from .utils import FloatArray, perp, wrap_angle

logger = logging.getLogger(__name__)


class System(str, Enum):
    """Which vortex system is integrated."""

    PW = "PW"
    PW2 = "PW2"


@dataclass(frozen=True, eq=False)
class VortexConfiguration:
    """Circulations, initial positions, viscosity and horizon of an N-vortex run."""

    positions: FloatArray
    circulations: FloatArray
    nu: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        circulations = np.asarray(self.circulations, dtype=float).reshape(-1)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "circulations", circulations)

        if positions.shape[0] != circulations.size or circulations.size == 0:
            raise ConfigurationError(
                f"Got {positions.shape[0]} positions for {circulations.size} circulations",
                key="vortices",
            )
        if np.any(circulations == 0.0):
            raise ConfigurationError("Circulations must be nonzero", key="vortices.alpha")
        if self.nu < 0.0:
            raise ConfigurationError(f"Viscosity must be non-negative, got {self.nu}", key="physics.nu")
        if self.T <= 0.0:
            raise ConfigurationError(f"Horizon must be positive, got {self.T}", key="physics.T")
        if self.size > 1 and _min_separation(positions) == 0.0:
            raise ConfigurationError("Initial vortex positions must be pairwise distinct", key="vortices")

    @property
    def size(self) -> int:
        return int(self.circulations.size)

    @property
    def abs_circulation(self) -> float:
        return float(np.sum(np.abs(self.circulations)))

    def with_nu(self, nu: float) -> "VortexConfiguration":
        return VortexConfiguration(self.positions, self.circulations, nu=nu, T=self.T)

    def same_setup(self, other: "VortexConfiguration") -> bool:
        """Same positions, circulations and horizon (viscosity may differ)."""
        return (
            self.size == other.size
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.circulations, other.circulations)
            and self.T == other.T
        )


def _pair_differences(z: FloatArray) -> Tuple[FloatArray, FloatArray]:
    diff = z[:, None, :] - z[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)
    return diff, r2


def _min_separation(z: FloatArray) -> float:
    if z.shape[0] < 2:
        return math.inf
    _, r2 = _pair_differences(z)
    iu = np.triu_indices(z.shape[0], k=1)
    return float(np.sqrt(np.min(r2[iu])))


def _check_distinct(r2: FloatArray) -> None:
    off = r2 + np.eye(r2.shape[0])
    if np.any(off == 0.0):
        i, j = np.argwhere(off == 0.0)[0]
        raise SingularityError(f"Vortices {i} and {j} coincide", indices=(int(i), int(j)))


def rhs_pw(z: npt.ArrayLike, alpha: npt.ArrayLike) -> FloatArray:
    """Helmholtz-Kirchhoff velocities z_i' = (1/2 pi) sum_j alpha_j (z_i - z_j)^perp / |z_i - z_j|^2."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    alpha = np.asarray(alpha, dtype=float)
    diff, r2 = _pair_differences(z)
    _check_distinct(r2)
    np.fill_diagonal(r2, np.inf)
    weights = alpha[None, :] / (2.0 * np.pi * r2)
    return np.sum(perp(diff) * weights[..., None], axis=1)


def rhs_pw2(z: npt.ArrayLike, alpha: npt.ArrayLike, eta: float) -> FloatArray:
    """Viscously regularized velocities sum_j (alpha_j / sqrt(eta)) v^G((z_i - z_j) / sqrt(eta))."""
    if eta < 0.0:
        raise DomainError(f"Regularization scale must be non-negative, got {eta}")
    if eta == 0.0:
        return rhs_pw(z, alpha)
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    alpha = np.asarray(alpha, dtype=float)
    diff, r2 = _pair_differences(z)
    _check_distinct(r2)
    root = math.sqrt(eta)
    v = oseen_velocity(diff / root)
    return np.sum(v * (alpha[None, :, None] / root), axis=1)


def circulation_centroid(z: npt.ArrayLike, alpha: npt.ArrayLike) -> FloatArray:
    """Conserved linear impulse sum_i alpha_i z_i."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    return np.sum(np.asarray(alpha, dtype=float)[:, None] * z, axis=0)


def hamiltonian(z: npt.ArrayLike, alpha: npt.ArrayLike) -> float:
    """Kirchhoff function sum_{i<j} alpha_i alpha_j log |z_i - z_j|."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    alpha = np.asarray(alpha, dtype=float)
    _, r2 = _pair_differences(z)
    iu = np.triu_indices(z.shape[0], k=1)
    return float(np.sum(alpha[iu[0]] * alpha[iu[1]] * 0.5 * np.log(r2[iu])))


@dataclass(eq=False)
class Trajectory:
    """Time-sampled vortex centers with minimal separation d and turnover time T0."""

    system: System
    config: VortexConfiguration
    times: FloatArray
    positions: FloatArray
    d: float
    T0: float
    collision_flag: bool = False
    dense: Optional[OdeSolution] = field(default=None, repr=False)

    @property
    def nu(self) -> float:
        return self.config.nu if self.system is System.PW2 else 0.0

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def position_at(self, t: float) -> FloatArray:
        """Vortex positions (N, 2) at time t from the dense output."""
        if t < self.times[0] - 1e-12 or t > self.t_end * (1.0 + 1e-12) + 1e-12:
            raise DomainError(f"Time {t} outside trajectory span [0, {self.t_end}]")
        t = min(max(t, float(self.times[0])), self.t_end)
        if self.dense is None:
            flat = self.positions.reshape(len(self.times), -1)
            values = np.array([np.interp(t, self.times, flat[:, k]) for k in range(flat.shape[1])])
        else:
            values = self.dense(t)
        return np.asarray(values, dtype=float).reshape(-1, 2)

    def relative(self, i: int, j: int, t: float) -> Tuple[FloatArray, float]:
        """z_ij = z_i - z_j at time t and its polar angle theta_ij."""
        z = self.position_at(t)
        z_ij = z[i] - z[j]
        return z_ij, float(math.atan2(z_ij[1], z_ij[0]))

    def separations(self) -> FloatArray:
        """Pairwise distances at every sample, shape (K, N, N)."""
        diff = self.positions[:, :, None, :] - self.positions[:, None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))


def _refine_min_separation(
    dense: Optional[OdeSolution], times: FloatArray, positions: FloatArray
) -> float:
    """Minimal pair distance over samples, refined between samples by golden-section search."""
    n = positions.shape[1]
    if n < 2:
        return math.inf
    iu = np.triu_indices(n, k=1)
    diff = positions[:, :, None, :] - positions[:, None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))[:, iu[0], iu[1]]
    k, p = np.unravel_index(int(np.argmin(dist)), dist.shape)
    best = float(dist[k, p])
    if dense is None or len(times) < 3:
        return best

    i, j = int(iu[0][p]), int(iu[1][p])

    def separation(t: float) -> float:
        z = np.asarray(dense(t)).reshape(-1, 2)
        return float(np.hypot(*(z[i] - z[j])))

    lo, hi = times[max(k - 1, 0)], times[min(k + 1, len(times) - 1)]
    try:
        if 0 < k < len(times) - 1 and dist[k, p] < min(dist[k - 1, p], dist[k + 1, p]):
            result = minimize_scalar(separation, bracket=(lo, times[k], hi), method="golden")
        else:
            result = minimize_scalar(separation, bounds=(lo, hi), method="bounded")
        if lo <= result.x <= hi:
            best = min(best, float(result.fun))
    except (ValueError, RuntimeError) as e:
        logger.warning(f"Separation refinement failed, keeping sampled minimum: {str(e)}")
    return best


def integrate(
    config: VortexConfiguration,
    system: System = System.PW,
    samples: int = 201,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
) -> Trajectory:
    """Integrate PW or PW2 over [0, T] with an adaptive embedded Runge-Kutta 5(4) scheme."""
    system = System(system)
    rtol = rtol or settings.ode_rtol
    atol = atol or settings.ode_atol
    n = config.size
    alpha = config.circulations
    nu = config.nu

    if system is System.PW:
        def fun(t: float, y: FloatArray) -> FloatArray:
            return rhs_pw(y.reshape(n, 2), alpha).ravel()
    else:
        def fun(t: float, y: FloatArray) -> FloatArray:
            return rhs_pw2(y.reshape(n, 2), alpha, nu * t).ravel()

    guard = settings.collision_guard_fraction * _min_separation(config.positions)
    events = []
    if n > 1:
        def collision(t: float, y: FloatArray) -> float:
            return _min_separation(y.reshape(n, 2)) - guard

        collision.terminal = True  # type: ignore[attr-defined]
        collision.direction = -1  # type: ignore[attr-defined]
        events.append(collision)

    logger.debug(f"Integrating {system.value} for N={n}, nu={nu}, T={config.T}")
    sol = solve_ivp(
        fun,
        (0.0, config.T),
        config.positions.ravel(),
        method="RK45",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=events or None,
    )
    if sol.status == -1:
        t_failed = float(sol.t[-1]) if sol.t.size else 0.0
        logger.error(f"Failed to integrate {system.value}: {sol.message}")
        raise IntegrationError(f"{system.value} integration failed: {sol.message}", t_failed=t_failed)

    collision_flag = sol.status == 1
    t_stop = float(sol.t[-1])
    times = np.linspace(0.0, config.T, samples)
    if collision_flag:
        times = times[times <= t_stop]
        if times[-1] < t_stop:
            times = np.append(times, t_stop)
        logger.warning(f"Collision guard triggered for {system.value} at t={t_stop:.6g}; trajectory truncated")

    positions = np.asarray(sol.sol(times)).T.reshape(len(times), n, 2)
    d = _refine_min_separation(sol.sol, times, positions)
    T0 = d * d / config.abs_circulation if math.isfinite(d) else math.inf
    return Trajectory(
        system=system,
        config=config,
        times=times,
        positions=positions,
        d=d,
        T0=T0,
        collision_flag=collision_flag,
        dense=sol.sol,
    )


@dataclass
class DeviationCurve:
    """Normalized PW2-vs-PW deviation and its fitted envelope K1 exp(-d^2 / (5 nu t))."""

    times: FloatArray
    deviation: FloatArray
    envelope: FloatArray
    k1: float
    nu: float
    d: float

    @property
    def final(self) -> float:
        return float(self.deviation[-1])


def compare_trajectories(traj_pw: Trajectory, traj_pw2: Trajectory) -> DeviationCurve:
    """Deviation max_i |z_i^nu - z_i| / d per sample plus the fitted bound envelope."""
    if not traj_pw.config.same_setup(traj_pw2.config):
        raise TrajectoryMismatchError("Trajectories come from different configurations")
    if traj_pw.times.shape != traj_pw2.times.shape or not np.allclose(traj_pw.times, traj_pw2.times, rtol=0, atol=1e-12):
        raise TrajectoryMismatchError(
            "Trajectories are sampled at different times",
            details={"samples": [int(traj_pw.times.size), int(traj_pw2.times.size)]},
        )

    d = traj_pw.d
    if not math.isfinite(d):
        deviation = np.zeros_like(traj_pw.times)
    else:
        gap = traj_pw2.positions - traj_pw.positions
        deviation = np.max(np.sqrt(np.sum(gap * gap, axis=-1)), axis=1) / d

    nu = traj_pw2.nu
    times = traj_pw.times
    envelope = np.zeros_like(times)
    k1 = 0.0
    t_end = float(times[-1])
    if nu > 0.0 and math.isfinite(d) and deviation[-1] > 0.0:
        rate = d * d / (5.0 * nu)
        positive = times > 0.0
        envelope[positive] = deviation[-1] * np.exp(-rate * (1.0 / times[positive] - 1.0 / t_end))
        log_k1 = math.log(deviation[-1]) + rate / t_end
        k1 = math.exp(log_k1) if log_k1 < 700.0 else math.inf
    return DeviationCurve(times=times, deviation=deviation, envelope=envelope, k1=k1, nu=nu, d=d)


def orbit_period(traj: Trajectory, i: int = 0, j: int = 1) -> float:
    """Time of the first full revolution of z_ij, by root finding on the unwrapped angle."""
    rel = traj.positions[:, i, :] - traj.positions[:, j, :]
    angles = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    turned = np.abs(angles - angles[0])
    hits = np.nonzero(turned >= 2.0 * np.pi)[0]
    if hits.size == 0:
        raise DomainError("Pair does not complete a revolution within the trajectory span")
    k = int(hits[0])
    sign = math.copysign(1.0, angles[k] - angles[0])
    target = angles[0] + sign * 2.0 * np.pi
    t_prev, a_prev = float(traj.times[k - 1]), float(angles[k - 1])

    def offset(t: float) -> float:
        _, theta = traj.relative(i, j, t)
        return a_prev + float(wrap_angle(theta - a_prev)) - target

    return float(brentq(offset, t_prev, float(traj.times[k]), xtol=1e-14, rtol=1e-15))


@dataclass
class DeviationSweep:
    """Deviation at the horizon over a viscosity sweep and the fit of log deviation vs 1/nu."""

    nus: List[float]
    deviations: List[float]
    slope: float
    intercept: float
    r2: float

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.nus)[::-1]
        devs = np.asarray(self.deviations)[order]
        return bool(np.all(np.diff(devs) < 0.0))


def fit_deviation_sweep(nus: Sequence[float], deviations: Sequence[float]) -> DeviationSweep:
    """Affine fit of log(deviation at T) against 1/nu."""
    x = 1.0 / np.asarray(nus, dtype=float)
    devs = np.asarray(deviations, dtype=float)
    if np.any(devs <= 0.0) or devs.size < 2:
        raise DomainError("Deviation sweep needs at least two positive deviations")
    y = np.log(devs)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - np.mean(y)) ** 2)
    r2 = 1.0 - float(np.sum(residual**2) / total) if total > 0.0 else 1.0
    return DeviationSweep(list(map(float, nus)), list(map(float, devs)), float(slope), float(intercept), r2)


def deviation_sweep(
    config: VortexConfiguration, nus: Sequence[float], samples: int = 201, max_workers: Optional[int] = None
) -> DeviationSweep:
    """Run PW once and PW2 for each nu on a thread pool; fit the decay of the deviation at T."""
    with ThreadPoolExecutor(max_workers=max_workers or settings.threads) as pool:
        pending = pool.submit(integrate, config.with_nu(0.0), System.PW, samples)
        viscous = list(pool.map(lambda nu: integrate(config.with_nu(nu), System.PW2, samples), nus))
        reference = pending.result()
    deviations = [compare_trajectories(reference, traj).final for traj in viscous]
    return fit_deviation_sweep(nus, deviations)
