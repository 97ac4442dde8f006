"""Navier-Stokes simulation stage."""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from ..exceptions import StageError
from ..experiment import ExperimentConfig
from ..ns_sim import SimulationResult, read_snapshot, run_simulation
from ..point_vortex import Trajectory
from ..reporting import Criterion
from ..utils import run_blocking, stage_log

logger = logging.getLogger(__name__)


@dataclass
class SimulationResults:
    runs: Dict[float, SimulationResult] = field(default_factory=dict)
    criteria: List[Criterion] = field(default_factory=list)


def simulation_dir(out_dir: Path, nu: float) -> Path:
    return Path(out_dir) / "simulation" / f"nu_{nu:g}"


class SimulationService:
    """Service running one direct simulation per viscosity, concurrently."""

    def __init__(self, executor: Optional[ThreadPoolExecutor] = None):
        self.executor = executor

    async def _simulate(self, config: ExperimentConfig, traj: Trajectory, nu: float, out_dir: Path) -> SimulationResult:
        t0 = config.start_time(nu)
        return await run_blocking(
            self.executor,
            run_simulation,
            config.vortex_config(nu),
            t0,
            config.output_times(t0),
            config.grid.n,
            config.grid.box,
            simulation_dir(out_dir, nu),
            traj.position_at(t0),
            config.grid.plane_correction,
        )

    @stage_log("simulation")
    async def run(
        self, config: ExperimentConfig, trajectories: Dict[float, Trajectory], out_dir: Path
    ) -> SimulationResults:
        try:
            runs = await asyncio.gather(
                *(self._simulate(config, trajectories[nu], nu, out_dir) for nu in config.nus)
            )
            results = SimulationResults(runs=dict(zip(config.nus, runs)))
            results.criteria = self.criteria(results.runs)
            return results

        except Exception as e:
            logger.error(f"Failed to run simulations: {str(e)}")
            raise StageError(f"Failed to run simulations: {str(e)}", stage="simulation")

    @staticmethod
    def criteria(runs: Dict[float, SimulationResult]) -> List[Criterion]:
        rows = [row for run in runs.values() for row in run.diagnostics]
        if not rows:
            return []
        return [
            Criterion("decomposition_residual", max(r["decomposition_residual"] for r in rows), 0.0, 1e-10, mode="max"),
            Criterion("mass_drift", max(r["mass_drift"] for r in rows), 0.0, 1e-6, mode="max"),
            Criterion("sign_undershoot", min(r["sign_undershoot"] for r in rows), -1e-4, 0.0, mode="min"),
        ]

    def load(self, config: ExperimentConfig, out_dir: Path) -> SimulationResults:
        """Re-read snapshots written by an earlier run."""
        results = SimulationResults()
        for nu in config.nus:
            folder = simulation_dir(out_dir, nu)
            index = pd.read_csv(folder / "index.csv")
            fields = [read_snapshot(Path(p), config.grid.plane_correction) for p in index["snapshot_path"]]
            diagnostics = pd.read_csv(folder / "diagnostics.csv").to_dict("records") if (folder / "diagnostics.csv").exists() else []
            results.runs[nu] = SimulationResult(
                nu, fields, [Path(p) for p in index["snapshot_path"]], folder / "index.csv", diagnostics
            )
        results.criteria = self.criteria(results.runs)
        logger.info(f"Loaded {sum(len(r.fields) for r in results.runs.values())} snapshots from {out_dir}")
        return results
