"""Shared fixtures for the vortex-lab test suite."""

import numpy as np
import pytest

from src.kernels import RadialGrid
from src.point_vortex import System, Trajectory, VortexConfiguration, integrate
from src.utils import make_rng

PAIR_POSITIONS = [[-0.5, 0.0], [0.5, 0.0]]


@pytest.fixture(scope="session")
def grid() -> RadialGrid:
    """Graded radial grid coarse enough for dense matrix tests."""
    return RadialGrid.build(1024, 20.0, validate=False)


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(20240611)


@pytest.fixture(scope="session")
def pair_config() -> VortexConfiguration:
    return VortexConfiguration(PAIR_POSITIONS, [1.0, 1.0], nu=1e-3, T=0.5)


@pytest.fixture(scope="session")
def pair_trajectory(pair_config) -> Trajectory:
    return integrate(pair_config, System.PW2, samples=51)


def static_trajectory(positions, circulations, nu: float = 0.01, T: float = 2.0) -> Trajectory:
    """Trajectory with frozen centers, for planting fields around known positions."""
    config = VortexConfiguration(positions, circulations, nu=nu, T=T)
    times = np.array([0.0, T])
    stacked = np.repeat(config.positions[None, :, :], 2, axis=0)
    separations = [
        float(np.hypot(*(config.positions[i] - config.positions[j])))
        for i in range(config.size)
        for j in range(i + 1, config.size)
    ]
    d = min(separations) if separations else np.inf
    return Trajectory(
        system=System.PW2,
        config=config,
        times=times,
        positions=stacked,
        d=d,
        T0=d * d / config.abs_circulation,
    )
