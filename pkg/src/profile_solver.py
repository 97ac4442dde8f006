"""Linearized operators around the Oseen vortex and the deformation profiles.

Two discretizations of the same objects live here:

* the function path integrates the homogeneous radial equations with an 8th-order
  Runge-Kutta scheme and inverts mode operators with Green's-function quadrature;
  it is used whenever accuracy matters (Lambda^{-1}, F_i0, H_i, apply_lambda);
* the matrix path (:class:`ModeOperators`) is a conservative, Y-symmetrized finite
  element discretization in which (1 - L) is symmetric positive definite and Lambda
  is exactly skew; it carries the regularized resolvent and the time stepping of
  the radially symmetric correction.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, eigh_tridiagonal, lu_factor, lu_solve, solve, solve_banded
from scipy.sparse.linalg import LinearOperator, onenormest

from .config import settings
from .exceptions import ConditioningError, DiscretizationError, DomainError, QuadratureError
from .expansion import AzimuthalMode, residuum_terms, strain_field
from .kernels import RadialGrid, RadialProfile, gauss_profile, phi_h_profiles
from .point_vortex import Trajectory
from .utils import FloatArray

logger = logging.getLogger(__name__)

SERIES_START = 0.05
ODE_RTOL = 1e-12

# Coefficients of h(r) = sum_k h_k r^{2k}, from x / (e^x - 1) with x = r^2 / 4.
_H_SERIES = [1.0, -1.0 / 8.0, 1.0 / 192.0, 0.0, -1.0 / (720.0 * 256.0), 0.0]


def _h_scalar(r: float) -> float:
    x = 0.25 * r * r
    if x < 1e-8:
        return 1.0 - 0.5 * x
    return x * math.exp(-x) / -math.expm1(-x)


def _profiles(grid: RadialGrid) -> Tuple[FloatArray, FloatArray, FloatArray]:
    phi, h = phi_h_profiles(grid.nodes)
    return np.asarray(phi), np.asarray(h), np.asarray(gauss_profile(grid.nodes))


# ---------------------------------------------------------------------------
# Function path
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class HomogeneousSolutions:
    """Regular-at-0 and decaying-at-infinity solutions of the mode-n radial equation."""

    n: int
    grid: RadialGrid
    psi_minus: RadialProfile
    psi_plus: RadialProfile
    dpsi_minus: FloatArray = field(repr=False)
    dpsi_plus: FloatArray = field(repr=False)
    w0: float
    wronskian_drift: float
    kappa_minus: float
    kappa_plus: float


def _frobenius(n: int, terms: int = 6) -> List[float]:
    coeffs = [1.0]
    for k in range(1, terms):
        acc = sum(_H_SERIES[j] * coeffs[k - 1 - j] for j in range(min(k, len(_H_SERIES))))
        coeffs.append(-acc / ((n + 2 * k) ** 2 - n * n))
    return coeffs


@lru_cache(maxsize=16)
def homogeneous_solutions(n: int, grid: Optional[RadialGrid] = None) -> HomogeneousSolutions:
    """psi_- ~ r^n at 0 (integrated outward) and psi_+ ~ r^{-n} at r_max (integrated inward)."""
    if n < 2:
        raise DomainError(f"Homogeneous solutions are defined for n >= 2, got {n}")
    grid = grid or RadialGrid.default()
    r = grid.nodes
    r_max = grid.r_max
    n2 = float(n * n)

    def rhs(x: float, y: FloatArray) -> FloatArray:
        return np.array([y[1], -y[1] / x + (n2 / (x * x) - _h_scalar(x)) * y[0]])

    coeffs = _frobenius(n)

    def series(x: FloatArray) -> Tuple[FloatArray, FloatArray]:
        value = sum(c * x ** (n + 2 * k) for k, c in enumerate(coeffs))
        slope = sum(c * (n + 2 * k) * x ** (n + 2 * k - 1) for k, c in enumerate(coeffs))
        return value, slope

    start_value, start_slope = series(np.array(SERIES_START))
    outward = solve_ivp(
        rhs, (SERIES_START, r_max), [float(start_value), float(start_slope)],
        method="DOP853", rtol=ODE_RTOL, atol=1e-30, dense_output=True,
    )
    r_min = float(r[1])
    inward = solve_ivp(
        rhs, (r_max, r_min), [r_max**-n, -n * r_max ** (-n - 1)],
        method="DOP853", rtol=ODE_RTOL, atol=1e-30, dense_output=True,
    )
    if not (outward.success and inward.success):
        raise DiscretizationError(f"Homogeneous solutions for n={n} failed: {outward.message} / {inward.message}")

    psi_m = np.empty_like(r)
    dpsi_m = np.empty_like(r)
    inner = r < SERIES_START
    psi_m[inner], dpsi_m[inner] = series(r[inner])
    outer_values = outward.sol(r[~inner])
    psi_m[~inner], dpsi_m[~inner] = outer_values[0], outer_values[1]

    psi_p = np.full_like(r, np.inf)
    dpsi_p = np.full_like(r, -np.inf)
    inward_values = inward.sol(r[1:])
    psi_p[1:], dpsi_p[1:] = inward_values[0], inward_values[1]

    if np.any(psi_m[1:] <= 0.0) or np.any(psi_p[1:] <= 0.0):
        raise DiscretizationError(f"Homogeneous solutions for n={n} lost positivity")

    band = r >= 0.1
    rw = r[band] * (psi_p[band] * dpsi_m[band] - psi_m[band] * dpsi_p[band])
    w0 = float(np.mean(rw))
    drift = float((np.max(rw) - np.min(rw)) / abs(w0))
    if drift > 1e-8:
        raise DiscretizationError(f"Wronskian r W(r) for n={n} is not constant", drift=drift)

    kappa_minus = float((psi_m[-1] + r_max * dpsi_m[-1] / n) / (2.0 * r_max**n))
    kappa_plus = float(psi_p[1] * r_min**n / (1.0 + r_min**2 / (4.0 * (n - 1))))
    logger.debug(f"Homogeneous solutions n={n}: w0={w0:.12g}, drift={drift:.2e}")
    return HomogeneousSolutions(
        n=n,
        grid=grid,
        psi_minus=RadialProfile(grid, psi_m),
        psi_plus=RadialProfile(grid, np.where(np.isfinite(psi_p), psi_p, 0.0)),
        dpsi_minus=dpsi_m,
        dpsi_plus=dpsi_p,
        w0=w0,
        wronskian_drift=drift,
        kappa_minus=kappa_minus,
        kappa_plus=kappa_plus,
    )


@dataclass
class OmegaSolution:
    """Solution of the mode-n equation Lambda(-omega cos n theta) = a sin n theta."""

    n: int
    Omega: RadialProfile
    omega: RadialProfile
    source: RadialProfile


def solve_omega_bvp(n: int, a: RadialProfile, tolerance: float = 1e-6) -> OmegaSolution:
    """Omega = psi_+ int_0^r (y/w0) psi_- f dy + psi_- int_r^inf (y/w0) psi_+ f dy, f = a / (n phi)."""
    grid = a.grid
    hs = homogeneous_solutions(n, grid)
    phi, h, _ = _profiles(grid)
    r = grid.nodes
    f = a.values / (n * phi)

    if not np.any(f):
        zero = RadialProfile.zeros(grid)
        return OmegaSolution(n, zero, zero, RadialProfile(grid, f))

    psi_p = hs.psi_plus.values
    inner_integrand = r * hs.psi_minus.values * f / hs.w0
    outer_integrand = r * psi_p * f / hs.w0
    outer_integrand[0] = 0.0

    inner = grid.cumulative(inner_integrand)
    outer = grid.cumulative_tail(outer_integrand)
    for name, values, integral in (("inner", inner_integrand, inner), ("outer", outer_integrand, outer)):
        scale = max(float(np.max(np.abs(integral))), 1e-300)
        estimate = grid.cumulative_error(values) / scale
        if estimate > tolerance:
            raise QuadratureError(
                f"Green's-function {name} quadrature for n={n} exceeds tolerance",
                estimate=estimate,
                tolerance=tolerance,
            )

    Omega = psi_p * inner + hs.psi_minus.values * outer
    Omega[0] = 0.0
    omega = h * Omega + f
    return OmegaSolution(n, RadialProfile(grid, Omega), RadialProfile(grid, omega), RadialProfile(grid, f))


def ode_residual(solution: OmegaSolution) -> float:
    """Relative residual of -(r Omega')'/r + (n^2/r^2 - h) Omega - f, fourth-order differences in s."""
    grid = solution.Omega.grid
    n = solution.n
    _, h, _ = _profiles(grid)
    om = solution.Omega.values
    f = solution.source.values
    ds = grid.ds
    k = np.arange(2, grid.size - 2)
    d1 = (-om[k + 2] + 8.0 * om[k + 1] - 8.0 * om[k - 1] + om[k - 2]) / (12.0 * ds)
    d2 = (-om[k + 2] + 16.0 * om[k + 1] - 30.0 * om[k] + 16.0 * om[k - 1] - om[k - 2]) / (12.0 * ds * ds)
    q = 1.0 - grid.s[k] / grid.stretch
    s_r = q * q
    s_rr = -2.0 / grid.stretch * q**3
    r = grid.nodes[k]
    om_r = d1 * s_r
    om_rr = d2 * s_r * s_r + d1 * s_rr
    residual = -om_rr - om_r / r + (n * n / (r * r) - h[k]) * om[k] - f[k]
    return float(np.max(np.abs(residual)) / max(float(np.max(np.abs(f))), 1e-300))


def mode_stream_function(n: int, values: npt.ArrayLike, grid: RadialGrid) -> FloatArray:
    """Mode-n stream function Omega with -Delta(Omega e^{i n theta}) = f e^{i n theta}.

    Green's function (r_< / r_>)^n / (2n), evaluated by cumulative quadrature.
    """
    if n < 1:
        raise DomainError(f"Mode stream function needs n >= 1, got {n}")
    f = np.asarray(values, dtype=float)
    r = grid.nodes
    inner = grid.cumulative(r ** (n + 1) * f)
    with np.errstate(divide="ignore", invalid="ignore"):
        outer_integrand = np.where(r > 0.0, r ** (1 - n) * f, 0.0 if n > 1 else f[0])
        result = (np.where(r > 0.0, inner / r**n, 0.0) + r**n * grid.cumulative_tail(outer_integrand)) / (2.0 * n)
    result[0] = 0.0
    return result


def _mode_m(n: int, f: FloatArray, stream: FloatArray, phi: FloatArray, g: FloatArray) -> FloatArray:
    return n * (phi * f - 0.5 * g * stream)


def apply_lambda(n: int, w: AzimuthalMode) -> AzimuthalMode:
    """Lambda w = v^G . grad w + v . grad G on one angular mode."""
    grid = w.grid
    if n != w.n:
        raise DomainError(f"Mode mismatch: operator n={n}, input n={w.n}")
    if n == 0:
        return AzimuthalMode.zeros(0, grid)
    phi, _, g = _profiles(grid)
    c, s = w.c_profile.values, w.s_profile.values
    psi_c = mode_stream_function(n, c, grid)
    psi_s = mode_stream_function(n, s, grid)
    return AzimuthalMode.from_arrays(
        n, grid, _mode_m(n, s, psi_s, phi, g), -_mode_m(n, c, psi_c, phi, g)
    )


def invert_lambda(n: int, z: AzimuthalMode) -> AzimuthalMode:
    """Solve Lambda w = z for n >= 2 by the Green's-function formula."""
    if n < 2:
        raise DomainError(f"Lambda is invertible on modes n >= 2 only, got {n}")
    grid = z.grid
    s = solve_omega_bvp(n, z.c_profile).omega.values
    c = -solve_omega_bvp(n, z.s_profile).omega.values
    return AzimuthalMode.from_arrays(n, grid, c, s)


@lru_cache(maxsize=4)
def quadrupole_template(grid: Optional[RadialGrid] = None) -> OmegaSolution:
    """omega(r) solving the n = 2 problem with a = r^2 g."""
    grid = grid or RadialGrid.default()
    a = RadialProfile(grid, grid.nodes**2 * gauss_profile(grid.nodes))
    return solve_omega_bvp(2, a)


# ---------------------------------------------------------------------------
# Matrix path
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class OperatorMatrix:
    """Dense matrix of a mode operator in Y-symmetrized coordinates."""

    n: int
    matrix: FloatArray
    tag: str

    def apply(self, vector: npt.ArrayLike) -> FloatArray:
        return self.matrix @ np.asarray(vector)


class ModeOperators:
    """Conservative Y-symmetric discretization of L, Lambda_n and the mode Biot-Savart law.

    Unknowns sit on all nodes for n = 0 and on nodes 1..M-1 otherwise (regularity at
    the origin). Vectors in symmetrized coordinates are f~_k = sqrt(W'_k e^{r_k^2/4}) f_k
    with W'_k = int r phi_k dr for the piecewise-linear hat functions phi_k, so the
    Euclidean inner product of f~ is the Y inner product up to 2 pi (n = 0) or pi.
    """

    def __init__(self, n: int, grid: RadialGrid):
        self.n = n
        self.grid = grid
        r_all = grid.nodes
        a, b = r_all[:-1], r_all[1:]
        width = b - a
        w_prime = np.zeros_like(r_all)
        w_prime[:-1] += width * (2.0 * a + b) / 6.0
        w_prime[1:] += width * (a + 2.0 * b) / 6.0
        mid = 0.5 * (a + b)

        # Flux coefficients rho_{k+1/2} E_{k}, rho_{k+1/2} E_{k+1} and their symmetric mean.
        scale = mid / width
        flux_left = scale * np.exp(0.25 * (a * a - mid * mid))
        flux_right = scale * np.exp(0.25 * (b * b - mid * mid))
        flux_sym = scale * np.exp(0.125 * (a * a + b * b) - 0.25 * mid * mid)

        diag = np.zeros_like(r_all)
        diag[:-1] += flux_left
        diag[1:] += flux_right
        diag = 1.0 + diag / w_prime
        with np.errstate(divide="ignore"):
            diag = diag + np.where(r_all > 0.0, n * n / (r_all * r_all), 0.0)
        off = -flux_sym / np.sqrt(w_prime[:-1] * w_prime[1:])

        start = 0 if n == 0 else 1
        self.start = start
        self.r = r_all[start:]
        self.w_prime = w_prime[start:]
        self.log_weight = 0.5 * np.log(self.w_prime) + 0.125 * self.r**2
        self.a_diag = diag[start:]
        self.a_off = off[start:]
        self._phi, _, self._g = (v[start:] for v in _profiles(grid))
        self._lu_cache: Dict[float, Tuple] = {}

    @property
    def size(self) -> int:
        return int(self.r.size)

    def to_tilde(self, values: npt.ArrayLike) -> FloatArray:
        values = np.asarray(values)
        return values[self.start:] * np.exp(self.log_weight)

    def from_tilde(self, vector: npt.ArrayLike) -> FloatArray:
        out = np.zeros(self.grid.size, dtype=np.result_type(vector, float))
        out[self.start:] = np.asarray(vector) * np.exp(-self.log_weight)
        return out

    def one_minus_l(self) -> OperatorMatrix:
        matrix = np.diag(self.a_diag) + np.diag(self.a_off, 1) + np.diag(self.a_off, -1)
        return OperatorMatrix(self.n, matrix, "L")

    def apply_one_minus_l(self, values: npt.ArrayLike) -> FloatArray:
        """(1 - L) f on grid values."""
        x = self.to_tilde(values)
        y = self.a_diag * x
        y[:-1] += self.a_off * x[1:]
        y[1:] += self.a_off * x[:-1]
        return self.from_tilde(y)

    def banded(self, dtau: float) -> FloatArray:
        """Banded storage of 1 + dtau (1 - L) in symmetrized coordinates."""
        ab = np.zeros((3, self.size))
        ab[0, 1:] = dtau * self.a_off
        ab[1, :] = 1.0 + dtau * self.a_diag
        ab[2, :-1] = dtau * self.a_off
        return ab

    def biot_savart(self) -> OperatorMatrix:
        """Symmetrized Green's matrix (1/2n)(r_</r_>)^n with quadrature weights."""
        if self.n < 1:
            raise DomainError("Mode Biot-Savart matrix needs n >= 1")
        ratio = np.minimum.outer(self.r, self.r) / np.maximum.outer(self.r, self.r)
        s = np.sqrt(self.w_prime) * np.exp(-0.125 * self.r**2)
        green = ratio**self.n / (2.0 * self.n)
        return OperatorMatrix(self.n, s[:, None] * green * s[None, :], "BiotSavartMode")

    @property
    def m_matrix(self) -> FloatArray:
        if not hasattr(self, "_m_matrix"):
            if self.n == 0:
                self._m_matrix = np.zeros((self.size, self.size))
            else:
                bs = self.biot_savart().matrix
                self._m_matrix = self.n * (np.diag(self._phi) - bs / (8.0 * np.pi))
        return self._m_matrix

    def lambda_matrix(self) -> OperatorMatrix:
        """Lambda_n acting on stacked (c~, s~): [[0, M], [-M, 0]]."""
        m = self.m_matrix
        zero = np.zeros_like(m)
        return OperatorMatrix(self.n, np.block([[zero, m], [-m, zero]]), "Lambda_n")

    def mode_to_tilde(self, w: AzimuthalMode) -> FloatArray:
        return self.to_tilde(w.c_profile.values) + 1j * self.to_tilde(w.s_profile.values)

    def tilde_to_mode(self, u: npt.ArrayLike) -> AzimuthalMode:
        u = np.asarray(u)
        c = self.from_tilde(u.real)
        s = self.from_tilde(u.imag) if self.n > 0 else None
        return AzimuthalMode.from_arrays(self.n, self.grid, c, s)

    def mass(self, values: npt.ArrayLike) -> float:
        """Discrete mass 2 pi sum_k W'_k f_k, exactly conserved by L."""
        values = np.asarray(values, dtype=float)
        return 2.0 * np.pi * float(np.sum(self.w_prime * values[self.start:]))

    def _factor(self, eps: float) -> Tuple:
        if eps not in self._lu_cache:
            a_tilde = self.one_minus_l().matrix
            system = eps * a_tilde - 1j * self.m_matrix
            try:
                lu = lu_factor(system, check_finite=True)
            except (LinAlgError, ValueError) as e:
                raise ConditioningError(f"Regularized system for n={self.n}, eps={eps} is singular: {str(e)}")
            if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
                raise ConditioningError(f"Regularized system for n={self.n}, eps={eps} is singular")
            self._log_condition(system, lu, eps)
            self._lu_cache[eps] = lu
        return self._lu_cache[eps]

    def _log_condition(self, system: np.ndarray, lu: Tuple, eps: float) -> None:
        size = system.shape[0]
        inverse = LinearOperator(
            (size, size),
            matvec=lambda v: lu_solve(lu, v),
            rmatvec=lambda v: lu_solve(lu, v, trans=2),
            dtype=complex,
        )
        try:
            condition = float(np.max(np.sum(np.abs(system), axis=0)) * onenormest(inverse))
        except Exception as e:
            logger.warning(f"Condition estimate failed for n={self.n}, eps={eps}: {str(e)}")
            return
        level = logging.WARNING if condition > 1e14 else logging.DEBUG
        logger.log(level, f"Regularized system n={self.n}, eps={eps:.3e}: cond_1 ~ {condition:.3e}")

    def regularized_solve(self, eps: float, z: AzimuthalMode) -> AzimuthalMode:
        """Solve [eps (1 - L) + Lambda_n] w = z."""
        rhs = self.mode_to_tilde(z)
        if not np.any(rhs):
            return AzimuthalMode.zeros(self.n, self.grid)
        if self.n == 0:
            u = solve(eps * self.one_minus_l().matrix, rhs.real, assume_a="sym")
        else:
            u = lu_solve(self._factor(eps), rhs)
        if not np.all(np.isfinite(u)):
            raise ConditioningError(f"Regularized solve for n={self.n}, eps={eps} produced non-finite values")
        return self.tilde_to_mode(u)

    def inverse_lambda(self, z: AzimuthalMode) -> AzimuthalMode:
        """Solve Lambda_n w = z in the matrix discretization (n >= 2)."""
        if self.n < 2:
            raise DomainError(f"Lambda is invertible on modes n >= 2 only, got {self.n}")
        rhs = self.mode_to_tilde(z)
        u = 1j * solve(self.m_matrix, rhs, assume_a="sym")
        return self.tilde_to_mode(u)


def mode_y_norm(*modes: AzimuthalMode) -> float:
    """Y-norm of a sum of angular modes (distinct modes are Y-orthogonal)."""
    total = 0.0
    for a in modes:
        for b in modes:
            total += a.y_inner(b)
    return math.sqrt(max(total, 0.0))


@lru_cache(maxsize=16)
def mode_operators(n: int, grid: Optional[RadialGrid] = None) -> ModeOperators:
    return ModeOperators(n, grid or RadialGrid.default())


def solve_regularized(eps: float, n: int, z: AzimuthalMode) -> AzimuthalMode:
    """Solve [eps (1 - L) + Lambda_n] w = z, eps != 0."""
    if eps == 0.0:
        raise DomainError("Regularization parameter must be nonzero")
    if z.n != n:
        raise DomainError(f"Mode mismatch: operator n={n}, input n={z.n}")
    return mode_operators(n, z.grid).regularized_solve(eps, z)


# ---------------------------------------------------------------------------
# Deformation profiles
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _nu_template(grid: RadialGrid, eps: float) -> FloatArray:
    """Complex profile of F^nu for unit single-pair data at phase 0."""
    omega = quadrupole_template(grid).omega.values
    if eps == 0.0:
        return omega.astype(complex)
    ops = mode_operators(2, grid)
    base = AzimuthalMode.from_arrays(2, grid, omega)
    defect = AzimuthalMode.from_arrays(
        2, grid, -eps * ops.apply_one_minus_l(base.c_profile.values), -eps * ops.apply_one_minus_l(base.s_profile.values)
    )
    correction = ops.regularized_solve(eps, defect)
    return (base + correction).as_complex()


def _pair_phase(traj: Trajectory, i: int, t: float) -> complex:
    """sigma = sum_j (d^2 / 4 pi)(alpha_j / alpha_i) |z_ij|^{-2} e^{-2 i theta_ij}."""
    z = traj.position_at(t)
    alpha = traj.config.circulations
    sigma = 0j
    for j in range(traj.config.size):
        if j == i:
            continue
        z_ij = z[i] - z[j]
        r2 = float(z_ij @ z_ij)
        sigma += traj.d**2 / (4.0 * np.pi) * (alpha[j] / alpha[i]) / r2 * np.exp(-2j * math.atan2(z_ij[1], z_ij[0]))
    return complex(sigma)


def _strain_phase(traj: Trajectory, i: int, t: float) -> complex:
    """delta = m11 - i m12 of the (symmetric, traceless) strain matrix."""
    m = strain_field(traj, i, t).matrix
    return complex(m[0, 0], -m[0, 1])


def angular_source_profiles(template: npt.ArrayLike, grid: RadialGrid, n_angles: Optional[int] = None) -> Tuple[FloatArray, FloatArray]:
    """Radial averages P0(v^T . grad T) and the strain response of a mode-2 template.

    Returns (q_vv, p) where, for F = Re(sigma T e^{2 i theta}) and a strain with phase
    delta, P0(v^F . grad F) = |sigma|^2 q_vv and P0(D . grad F) = Re(delta conj(sigma) p).
    Both are angular trapezoid averages of the product fields.
    """
    n_angles = n_angles or settings.angular_quadrature
    template = np.asarray(template, dtype=complex)
    r = grid.nodes
    c, s = template.real, -template.imag
    psi_c = mode_stream_function(2, c, grid)
    psi_s = mode_stream_function(2, s, grid)
    dc, ds_, dpc, dps = (CubicSpline(r, v)(r, 1) for v in (c, s, psi_c, psi_s))
    inv_r = np.zeros_like(r)
    inv_r[1:] = 1.0 / r[1:]

    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    cos2, sin2 = np.cos(2.0 * theta)[None, :], np.sin(2.0 * theta)[None, :]
    col = lambda v: v[:, None]  # noqa: E731

    f_r = col(dc) * cos2 + col(ds_) * sin2
    f_t = 2.0 * col(inv_r) * (-col(c) * sin2 + col(s) * cos2)
    v_r = 2.0 * col(inv_r) * (-col(psi_c) * sin2 + col(psi_s) * cos2)
    v_t = -(col(dpc) * cos2 + col(dps) * sin2)
    q_vv = np.mean(v_r * f_r + v_t * f_t, axis=1)

    rr = col(r)
    p1 = np.mean(rr * cos2 * f_r - rr * sin2 * f_t, axis=1)
    p2 = np.mean(rr * sin2 * f_r + rr * cos2 * f_t, axis=1)
    return q_vv, p1 + 1j * p2


def integrate_fbar(
    ops: ModeOperators,
    source: Callable[[float], FloatArray],
    t_grid: Sequence[float],
    t_start: float,
    dtau: Optional[float] = None,
) -> List[FloatArray]:
    """Integrate t dF/dt + F - L F = source(t) from F(t_start) = 0 in tau = log t.

    Implicit Euler with Richardson extrapolation (full step vs two half steps).
    Returns grid values at each requested time.
    """
    dtau = dtau or settings.fbar_dtau
    targets = sorted(float(t) for t in t_grid)
    if t_start <= 0.0 or (targets and targets[0] < t_start):
        raise DomainError(f"Start time {t_start} must be positive and precede all output times")

    cache: Dict[float, FloatArray] = {}

    def rhs_at(tau: float) -> FloatArray:
        if tau not in cache:
            cache[tau] = ops.to_tilde(source(math.exp(tau)))
        return cache[tau]

    def euler(x: FloatArray, tau: float, step: float) -> FloatArray:
        return solve_banded((1, 1), ops.banded(step), x + step * rhs_at(tau + step))

    x = np.zeros(ops.size)
    tau = math.log(t_start)
    results: Dict[float, FloatArray] = {}
    for target in targets:
        tau_target = math.log(target)
        while tau < tau_target - 1e-14:
            step = min(dtau, tau_target - tau)
            full = euler(x, tau, step)
            half = euler(euler(x, tau, 0.5 * step), tau + 0.5 * step, 0.5 * step)
            x = 2.0 * half - full
            tau += step
            if len(cache) > 8:
                for key in [k for k in cache if k < tau - 1e-12]:
                    del cache[key]
        results[target] = ops.from_tilde(x)
    return [results[float(t)] for t in t_grid]


def duhamel_fbar(ops: ModeOperators, q: npt.ArrayLike, t: float, alpha: float, d: float) -> FloatArray:
    """Semigroup formula -(alpha t / d^2) int_0^inf S(sigma) e^{-2 sigma} q d sigma for a frozen source q.

    S(sigma) = exp(sigma L) is applied through the eigen-decomposition of the symmetric
    tridiagonal (1 - L); each eigen-mode is integrated in sigma exactly.
    """
    mu, vectors = eigh_tridiagonal(ops.a_diag, ops.a_off)
    q_tilde = ops.to_tilde(q)
    coefficients = vectors.T @ q_tilde
    weights = 1.0 / (1.0 + mu)
    return ops.from_tilde(-(alpha * t / d**2) * (vectors @ (weights * coefficients)))


class FbarEvolver:
    """Radially symmetric correction F_bar_i along a PW2 trajectory."""

    def __init__(self, traj: Trajectory, i: int, nu: float, grid: Optional[RadialGrid] = None):
        self.traj = traj
        self.i = i
        self.nu = nu
        self.grid = grid or RadialGrid.default()
        self.alpha_i = float(traj.config.circulations[i])
        self.eps = nu / self.alpha_i
        self.ops = mode_operators(0, self.grid)
        self.template = _nu_template(self.grid, self.eps)
        self.q_vv, self.p_strain = angular_source_profiles(self.template, self.grid)
        self._g = gauss_profile(self.grid.nodes)
        self._g_mass = self.ops.mass(self._g)

    def source(self, t: float) -> FloatArray:
        """-(alpha_i t / d^2) P0 Q_i(t), with its discrete mass defect removed."""
        sigma = _pair_phase(self.traj, self.i, t)
        delta = _strain_phase(self.traj, self.i, t)
        q = abs(sigma) ** 2 * self.q_vv + np.real(delta * np.conj(sigma) * self.p_strain)
        values = -(self.alpha_i * t / self.traj.d**2) * q
        return values - self.ops.mass(values) / self._g_mass * self._g

    def evolve(self, t_grid: Sequence[float], dtau: Optional[float] = None) -> List[AzimuthalMode]:
        if self.traj.config.size < 2:
            return [AzimuthalMode.zeros(0, self.grid) for _ in t_grid]
        t_first = min(t_grid)
        t_start = t_first * math.exp(-settings.fbar_history)
        values = integrate_fbar(self.ops, self.source, t_grid, t_start, dtau)
        return [AzimuthalMode.from_arrays(0, self.grid, v) for v in values]


def evolve_fbar(
    traj: Trajectory,
    i: int,
    nu: float,
    t_grid: Sequence[float],
    dtau: Optional[float] = None,
    grid: Optional[RadialGrid] = None,
) -> List[AzimuthalMode]:
    """F_bar_i(., t) for t in t_grid, started from 0 far in the past in log time."""
    return FbarEvolver(traj, i, nu, grid).evolve(t_grid, dtau)


@dataclass
class DeformationProfiles:
    """Deformation profiles of vortex i at time t."""

    i: int
    t: float
    nu: float
    alpha_i: float
    d: float
    z_rel: List[FloatArray]
    thetas: List[float]
    F0: AzimuthalMode
    Fnu: AzimuthalMode
    Fbar: AzimuthalMode
    H: List[AzimuthalMode]
    omega: RadialProfile

    @property
    def grid(self) -> RadialGrid:
        return self.F0.grid

    @property
    def fbar_mass(self) -> float:
        return mode_operators(0, self.grid).mass(self.Fbar.c_profile.values)

    def named_modes(self) -> List[Tuple[str, AzimuthalMode]]:
        return [("F0", self.F0), ("Fnu", self.Fnu), ("Fbar", self.Fbar)] + [
            (f"H{mode.n}", mode) for mode in self.H
        ]

    def dump_rows(self) -> List[Tuple[str, float, int, float, float]]:
        """Rows (profile, r, mode_n, cos_coeff, sin_coeff) of every stored profile."""
        rows = []
        for name, mode in self.named_modes():
            for r, c, s in zip(mode.grid.nodes, mode.c_profile.values, mode.s_profile.values):
                rows.append((name, float(r), mode.n, float(c), float(s)))
        return rows


def build_deformation(
    traj: Trajectory,
    i: int,
    t: float,
    nu: float,
    fbar: Optional[AzimuthalMode] = None,
    grid: Optional[RadialGrid] = None,
) -> DeformationProfiles:
    """F_i0, F_i^nu, F_bar_i and H_i for vortex i at time t."""
    grid = grid or RadialGrid.default()
    alpha_i = float(traj.config.circulations[i])
    eps = nu / alpha_i
    terms = residuum_terms(traj, i, t, nu * t, grid)
    omega = quadrupole_template(grid).omega

    if traj.config.size < 2:
        zero2 = AzimuthalMode.zeros(2, grid)
        return DeformationProfiles(
            i, t, nu, alpha_i, traj.d, [], [], zero2, zero2, AzimuthalMode.zeros(0, grid),
            [AzimuthalMode.zeros(1, grid), AzimuthalMode.zeros(3, grid)], omega,
        )

    sigma = _pair_phase(traj, i, t)
    F0 = AzimuthalMode.from_complex(2, grid, sigma * omega.values)
    Fnu = AzimuthalMode.from_complex(2, grid, sigma * _nu_template(grid, eps))

    b1, b3 = terms.B
    H1 = solve_regularized(eps, 1, -b1) if eps != 0.0 else AzimuthalMode.zeros(1, grid)
    H3 = invert_lambda(3, -b3)

    if fbar is None:
        fbar = evolve_fbar(traj, i, nu, [t], grid=grid)[0]
    return DeformationProfiles(
        i=i,
        t=t,
        nu=nu,
        alpha_i=alpha_i,
        d=traj.d,
        z_rel=terms.z_rel,
        thetas=terms.thetas,
        F0=F0,
        Fnu=Fnu,
        Fbar=fbar,
        H=[H1, H3],
        omega=omega,
    )


class WappField:
    """Approximate rescaled vorticity G + eps (F_bar + F^nu) [+ eps^{3/2} H] as a field of xi."""

    def __init__(self, profiles: DeformationProfiles, nu_t_over_d2: float, order: float = 1.0):
        if order not in (1, 1.5):
            raise DomainError(f"Approximation order must be 1 or 1.5, got {order}")
        self.profiles = profiles
        self.eps = nu_t_over_d2
        self.order = order

    def evaluate(self, r: npt.ArrayLike, theta: npt.ArrayLike) -> FloatArray:
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r_max = self.profiles.grid.r_max
        if np.any(r > r_max):
            logger.warning(f"w_app evaluated beyond r_max={r_max}; deformation clamped to 0 there")
        value = gauss_profile(r)
        if self.eps == 0.0:
            return value
        p = self.profiles
        value = value + self.eps * (p.Fbar.evaluate(r, theta) + p.Fnu.evaluate(r, theta))
        if self.order == 1.5:
            for mode in p.H:
                value = value + self.eps**1.5 * mode.evaluate(r, theta)
        return value

    def __call__(self, xi: npt.ArrayLike) -> FloatArray:
        xi = np.asarray(xi, dtype=float)
        return self.evaluate(np.hypot(xi[..., 0], xi[..., 1]), np.arctan2(xi[..., 1], xi[..., 0]))


def assemble_wapp(profiles: DeformationProfiles, nu_t_over_d2: float, order: float = 1.0) -> WappField:
    """Order 1: G + (nu t / d^2)(F_bar + F^nu); order 1.5 adds (nu t / d^2)^{3/2} H."""
    return WappField(profiles, nu_t_over_d2, order)
