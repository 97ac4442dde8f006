"""Utility functions for the vortex interaction lab."""

import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from functools import partial, wraps
from typing import Any, Callable, Dict, Optional

import numpy as np
import numpy.typing as npt

from .config import settings

logger = logging.getLogger(__name__)

STAGE_LOGGER = "src.stages"

FloatArray = npt.NDArray[np.float64]


def stage_log(stage: str, **context: Any):
    """Decorator recording one structured line per pipeline stage.

    Works on both coroutine functions and plain functions; the record carries the
    stage name, status, duration and any static context given to the decorator.
    """

    def _record(status: str, start_time: float, error: Optional[BaseException] = None) -> None:
        stage_logger = logging.getLogger(STAGE_LOGGER)
        payload: Dict[str, Any] = {
            "stage": stage,
            "status": status,
            "duration": time.time() - start_time,
            "timestamp": time.time(),
            **context,
        }
        if error is not None:
            payload["error"] = str(error)
            stage_logger.error(payload)
        else:
            stage_logger.info(payload)

    def decorator(func: Callable):
        if asyncio.iscoroutinefunction(func):

            @wraps(func)
            async def async_wrapper(*args, **kwargs):
                start_time = time.time()
                try:
                    result = await func(*args, **kwargs)
                except Exception as e:
                    _record("failed", start_time, e)
                    raise
                _record("success", start_time)
                return result

            return async_wrapper

        @wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.time()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                _record("failed", start_time, e)
                raise
            _record("success", start_time)
            return result

        return wrapper

    return decorator


async def run_blocking(executor: Optional[ThreadPoolExecutor], func: Callable, *args, **kwargs) -> Any:
    """Run a blocking numerical routine in the executor without blocking the loop."""
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(executor, partial(func, *args, **kwargs))


def perp(v: npt.ArrayLike) -> FloatArray:
    """Rotate planar vectors (shape ``(..., 2)``) by +90 degrees: x -> (-x2, x1)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def rotate(v: npt.ArrayLike, angle: float) -> FloatArray:
    """Rotate planar vectors counter-clockwise by ``angle``."""
    v = np.asarray(v, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], axis=-1)


def wrap_angle(angle: npt.ArrayLike, period: float = 2.0 * np.pi) -> Any:
    """Wrap angles into [-period/2, period/2)."""
    return (np.asarray(angle) + 0.5 * period) % period - 0.5 * period


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    """Random generator for randomized property checks; defaults to the configured seed."""
    return np.random.default_rng(settings.seed if seed is None else seed)


def polar_grid(r_max: float, n_radii: int, n_angles: int, include_origin: bool = True):
    """Radii, angles and the Cartesian points (n_radii, n_angles, 2) of a polar grid."""
    radii = np.linspace(0.0, r_max, n_radii) if include_origin else np.linspace(r_max / n_radii, r_max, n_radii)
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    points = np.stack(
        [radii[:, None] * np.cos(angles)[None, :], radii[:, None] * np.sin(angles)[None, :]],
        axis=-1,
    )
    return radii, angles, points
