"""Point-vortex trajectory stage."""

import asyncio
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

from ..exceptions import DomainError, StageError
from ..experiment import ExperimentConfig
from ..point_vortex import (
    DeviationCurve,
    DeviationSweep,
    System,
    Trajectory,
    VortexConfiguration,
    compare_trajectories,
    fit_deviation_sweep,
    integrate,
    orbit_period,
)
from ..reporting import Criterion, plot_deviation, write_trajectory_csv
from ..utils import run_blocking, stage_log

logger = logging.getLogger(__name__)

SAMPLES = 401


@dataclass
class TrajectoryResults:
    """PW reference, PW2 trajectories per viscosity and the deviation diagnostics."""

    reference: Trajectory
    viscous: Dict[float, Trajectory]
    curves: List[DeviationCurve] = field(default_factory=list)
    sweep: Optional[DeviationSweep] = None
    period_rel_error: Optional[float] = None
    criteria: List[Criterion] = field(default_factory=list)


class TrajectoryService:
    """Service integrating the point-vortex systems."""

    def __init__(self, executor: Optional[ThreadPoolExecutor] = None):
        self.executor = executor

    async def _integrate(self, vortices: VortexConfiguration, system: System) -> Trajectory:
        return await run_blocking(self.executor, integrate, vortices, system, SAMPLES)

    @stage_log("trajectories")
    async def run(self, config: ExperimentConfig, out_dir: Path) -> TrajectoryResults:
        """Integrate PW once and PW2 for every viscosity; with run_pv, add the deviation sweep and period check."""
        try:
            reference = await self._integrate(config.vortex_config(0.0), System.PW)
            trajs = await asyncio.gather(
                *(self._integrate(config.vortex_config(nu), System.PW2) for nu in config.nus)
            )
            results = TrajectoryResults(reference=reference, viscous=dict(zip(config.nus, trajs)))

            if config.analysis.run_pv:
                await self._pv_checks(config, results, out_dir)
            return results

        except Exception as e:
            logger.error(f"Failed to integrate trajectories: {str(e)}")
            raise StageError(f"Failed to integrate trajectories: {str(e)}", stage="trajectories")

    async def _pv_checks(self, config: ExperimentConfig, results: TrajectoryResults, out_dir: Path) -> None:
        folder = Path(out_dir) / "trajectories"
        write_trajectory_csv(results.reference, folder / "pw.csv")
        for nu in config.nus:
            write_trajectory_csv(results.viscous[nu], folder / f"pw2_nu_{nu:g}.csv")

        if results.reference.config.size < 2:
            logger.info("Single vortex: no deviation sweep or orbit period")
            return

        sweep_nus = config.analysis.deviation_nus or config.nus
        horizon = config.analysis.deviation_T
        if horizon is None and sweep_nus == config.nus:
            reference, viscous = results.reference, [results.viscous[nu] for nu in sweep_nus]
        else:
            base = replace(config.vortex_config(0.0), T=horizon or config.physics.T)
            reference = await self._integrate(base, System.PW)
            viscous = await asyncio.gather(*(self._integrate(base.with_nu(nu), System.PW2) for nu in sweep_nus))

        results.curves = [compare_trajectories(reference, traj) for traj in viscous]
        plot_deviation(
            results.curves,
            Path(out_dir) / "plots" / "deviation.svg",
            {"config": config.source, "stage": "trajectories"},
        )
        if len(sweep_nus) >= 2:
            try:
                results.sweep = fit_deviation_sweep(sweep_nus, [c.final for c in results.curves])
                results.criteria.append(Criterion("pw2_deviation_monotone", float(results.sweep.monotone), 1.0, 0.0))
                results.criteria.append(Criterion("pw2_deviation_r2", results.sweep.r2, 0.99, 0.0, mode="min"))
            except DomainError as e:
                logger.warning(f"Deviation sweep not fitted: {e.message}")

        alphas = reference.config.circulations
        if reference.config.size == 2 and alphas[0] + alphas[1] != 0.0:
            separation = float(math.hypot(*(reference.positions[0, 0] - reference.positions[0, 1])))
            expected = 4.0 * math.pi**2 * separation**2 / abs(alphas[0] + alphas[1])
            try:
                measured = orbit_period(reference)
            except DomainError as e:
                logger.info(f"Orbit period not measured: {e.message}")
                return
            results.period_rel_error = abs(measured - expected) / expected
            results.criteria.append(Criterion("pw_period_rel_error", results.period_rel_error, 0.0, 1e-6, mode="max"))
            logger.info(f"PW orbit period {measured:.12g} (closed form {expected:.12g})")
