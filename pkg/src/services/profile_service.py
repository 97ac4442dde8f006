"""Deformation profile stage."""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..exceptions import StageError
from ..experiment import ExperimentConfig
from ..kernels import RadialGrid, gauss_profile, sup_r2h
from ..point_vortex import Trajectory
from ..profile_solver import DeformationProfiles, build_deformation, evolve_fbar
from ..reporting import Criterion, write_profile_dump
from ..utils import run_blocking, stage_log

logger = logging.getLogger(__name__)


@dataclass
class ProfileResults:
    """Deformation profiles of the analysed vortex keyed by viscosity and output time."""

    vortex: int
    profiles: Dict[float, Dict[float, DeformationProfiles]] = field(default_factory=dict)
    dumps: List[Path] = field(default_factory=list)
    criteria: List[Criterion] = field(default_factory=list)


def _profiles_for(traj: Trajectory, i: int, nu: float, times: Sequence[float]) -> Dict[float, DeformationProfiles]:
    fbars = evolve_fbar(traj, i, nu, times)
    return {t: build_deformation(traj, i, t, nu, fbar=fbar) for t, fbar in zip(times, fbars)}


class ProfileService:
    """Service building F_i0, F_i^nu, F_bar_i and H_i along the PW2 trajectories."""

    def __init__(self, executor: Optional[ThreadPoolExecutor] = None):
        self.executor = executor

    def kernel_criteria(self) -> List[Criterion]:
        grid = RadialGrid.default()
        mass_error = abs(grid.mass(gauss_profile(grid.nodes)) - 1.0)
        r2h, _ = sup_r2h()
        return [
            Criterion("kernel_mass_error", mass_error, 0.0, 1e-12, mode="max"),
            Criterion("r2h_sup", r2h, 2.59, 0.01),
        ]

    @stage_log("profiles")
    async def run(
        self, config: ExperimentConfig, trajectories: Dict[float, Trajectory], out_dir: Path
    ) -> ProfileResults:
        """Profiles at every output time of every viscosity; dumps at the last output time."""
        try:
            i = config.analysis.vortex
            results = ProfileResults(vortex=i, criteria=self.kernel_criteria())
            jobs = {}
            for nu in config.nus:
                times = config.output_times(config.start_time(nu))
                jobs[nu] = run_blocking(self.executor, _profiles_for, trajectories[nu], i, nu, times)
            built = await asyncio.gather(*jobs.values())
            results.profiles = dict(zip(jobs.keys(), built))

            folder = Path(out_dir) / "profiles"
            for nu, by_time in results.profiles.items():
                t_last = max(by_time)
                path = folder / f"vortex_{i}_t_{t_last:.6g}_nu_{nu:g}.csv"
                results.dumps.append(write_profile_dump(by_time[t_last], path))
                logger.info(f"Profiles for nu={nu:g}: F_bar mass {by_time[t_last].fbar_mass:.2e}")
            return results

        except Exception as e:
            logger.error(f"Failed to build deformation profiles: {str(e)}")
            raise StageError(f"Failed to build deformation profiles: {str(e)}", stage="profiles")
