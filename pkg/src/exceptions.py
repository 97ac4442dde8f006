"""Custom exceptions for the vortex interaction lab."""

from typing import Any, Dict, Optional


class VortexLabException(Exception):
    """Base exception for the vortex interaction lab."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.error_code = error_code or "VORTEX_LAB_ERROR"
        self.details = details or {}
        super().__init__(self.message)


class SingularityError(VortexLabException):
    """Exception raised when a kernel is evaluated at one of its poles."""

    def __init__(self, message: str, indices: Optional[tuple] = None, details: Optional[Dict[str, Any]] = None):
        self.indices = indices
        error_details = details or {}
        if indices is not None:
            error_details["indices"] = list(indices)
        super().__init__(message, "KERNEL_SINGULARITY", error_details)


class DomainError(VortexLabException):
    """Exception raised when an argument lies outside the region of validity."""

    def __init__(self, message: str, ratio: Optional[float] = None, details: Optional[Dict[str, Any]] = None):
        self.ratio = ratio
        error_details = details or {}
        if ratio is not None:
            error_details["ratio"] = ratio
        super().__init__(message, "DOMAIN_ERROR", error_details)


class QuadratureError(VortexLabException):
    """Exception raised when a quadrature self-estimate exceeds its tolerance."""

    def __init__(
        self,
        message: str,
        estimate: Optional[float] = None,
        tolerance: Optional[float] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.estimate = estimate
        self.tolerance = tolerance
        error_details = details or {}
        if estimate is not None:
            error_details["estimate"] = estimate
        if tolerance is not None:
            error_details["tolerance"] = tolerance
        super().__init__(message, "QUADRATURE_ERROR", error_details)


class DiscretizationError(VortexLabException):
    """Exception raised when a discrete invariant (e.g. a Wronskian) drifts."""

    def __init__(self, message: str, drift: Optional[float] = None, details: Optional[Dict[str, Any]] = None):
        self.drift = drift
        error_details = details or {}
        if drift is not None:
            error_details["drift"] = drift
        super().__init__(message, "DISCRETIZATION_ERROR", error_details)


class IntegrationError(VortexLabException):
    """Exception raised when an ODE integration fails."""

    def __init__(self, message: str, t_failed: Optional[float] = None, details: Optional[Dict[str, Any]] = None):
        self.t_failed = t_failed
        error_details = details or {}
        if t_failed is not None:
            error_details["t_failed"] = t_failed
        super().__init__(message, "INTEGRATION_ERROR", error_details)


class TrajectoryMismatchError(VortexLabException):
    """Exception raised when two trajectories cannot be compared."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "TRAJECTORY_MISMATCH", details)


class ConditioningError(VortexLabException):
    """Exception raised when a linear system is numerically singular."""

    def __init__(self, message: str, condition: Optional[float] = None, details: Optional[Dict[str, Any]] = None):
        self.condition = condition
        error_details = details or {}
        if condition is not None:
            error_details["condition"] = condition
        super().__init__(message, "CONDITIONING_ERROR", error_details)


class ConfigurationError(VortexLabException):
    """Exception raised when an experiment or run configuration is invalid."""

    def __init__(self, message: str, key: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        self.key = key
        error_details = details or {}
        if key:
            error_details["key"] = key
        super().__init__(message, "CONFIGURATION_ERROR", error_details)


class StepRejected(VortexLabException):
    """Exception raised when a time step violates the CFL restriction."""

    def __init__(
        self,
        message: str,
        dt: Optional[float] = None,
        dt_max: Optional[float] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.dt = dt
        self.dt_max = dt_max
        error_details = details or {}
        if dt is not None:
            error_details["dt"] = dt
        if dt_max is not None:
            error_details["dt_max"] = dt_max
        super().__init__(message, "STEP_REJECTED", error_details)


class ExtractionError(VortexLabException):
    """Exception raised when a rescaled profile cannot be sampled from a field."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "EXTRACTION_ERROR", details)


class AliasingError(VortexLabException):
    """Exception raised when an angular grid is too coarse for a projection."""

    def __init__(self, message: str, mode: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        self.mode = mode
        error_details = details or {}
        if mode is not None:
            error_details["mode"] = mode
        super().__init__(message, "ALIASING_ERROR", error_details)


class FitError(VortexLabException):
    """Exception raised when a convergence series cannot be fitted."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "FIT_ERROR", details)


class StageError(VortexLabException):
    """Exception raised when a pipeline stage fails."""

    def __init__(self, message: str, stage: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        self.stage = stage
        error_details = details or {}
        if stage:
            error_details["stage"] = stage
        super().__init__(message, "STAGE_ERROR", error_details)
