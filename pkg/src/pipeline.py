"""Experiment pipeline: a small DAG of stage services."""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional

from .config import settings
from .exceptions import StageError
from .experiment import ExperimentConfig
from .reporting import Criterion, write_summary
from .services import (
    AnalysisService,
    ExpansionService,
    ProfileService,
    SimulationService,
    TrajectoryService,
)

logger = logging.getLogger(__name__)

STAGES = ("trajectories", "profiles", "expansion", "simulation", "analysis")

# Subcommand -> stages it runs (trajectories feed every stage that needs centers).
COMMAND_STAGES: Dict[str, FrozenSet[str]] = {
    "pv": frozenset({"trajectories"}),
    "profiles": frozenset({"trajectories", "profiles"}),
    "expand": frozenset({"expansion"}),
    "simulate": frozenset({"trajectories", "simulation"}),
    "analyze": frozenset({"trajectories", "profiles", "analysis"}),
    "reproduce": frozenset(STAGES),
}


@dataclass
class RunReport:
    """Outcome of one pipeline run."""

    out_dir: Path
    criteria: List[Criterion] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    summary_path: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def all_passed(self) -> bool:
        return self.ok and all(c.passed for c in self.criteria)


class ExperimentPipeline:
    """Runs the enabled stages of an experiment, concurrently where the DAG allows."""

    def __init__(self, config: ExperimentConfig, out_dir: Optional[Path] = None, threads: Optional[int] = None):
        self.config = config
        self.out_dir = Path(out_dir or config.output.dir)
        self.executor = ThreadPoolExecutor(max_workers=threads or settings.threads)
        self.trajectory_service = TrajectoryService(self.executor)
        self.profile_service = ProfileService(self.executor)
        self.expansion_service = ExpansionService(self.executor)
        self.simulation_service = SimulationService(self.executor)
        self.analysis_service = AnalysisService(self.executor)

    def enabled(self, stages: Iterable[str]) -> FrozenSet[str]:
        toggles = {
            "profiles": self.config.analysis.run_profiles,
            "expansion": self.config.analysis.run_expansion,
            "simulation": self.config.analysis.run_simulation,
            "analysis": self.config.analysis.run_analysis,
        }
        return frozenset(s for s in stages if toggles.get(s, True))

    async def _stage(self, report: RunReport, name: str, coroutine) -> Any:
        try:
            result = await coroutine
        except StageError as e:
            report.failures[name] = e.message
            return None
        except Exception as e:
            logger.error(f"Failed stage {name}: {str(e)}")
            report.failures[name] = str(e)
            return None
        report.results[name] = result
        report.criteria.extend(getattr(result, "criteria", []))
        return result

    def _skip(self, report: RunReport, name: str, upstream: str) -> None:
        report.failures[name] = f"skipped: {upstream} failed"
        logger.warning(f"Stage {name} skipped because {upstream} failed")

    async def run(self, stages: Iterable[str] = STAGES) -> RunReport:
        stages = self.enabled(stages)
        report = RunReport(out_dir=self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Running {sorted(stages)} for {self.config.name} into {self.out_dir}")

        try:
            pending = {}
            if "expansion" in stages:
                pending["expansion"] = asyncio.ensure_future(
                    self._stage(report, "expansion", self.expansion_service.run(self.config, self.out_dir))
                )

            trajectories = None
            if "trajectories" in stages:
                traj = await self._stage(report, "trajectories", self.trajectory_service.run(self.config, self.out_dir))
                trajectories = traj.viscous if traj is not None else None

            downstream = [s for s in ("profiles", "simulation", "analysis") if s in stages]
            if trajectories is None:
                for name in downstream:
                    self._skip(report, name, "trajectories")
            else:
                if "profiles" in stages:
                    pending["profiles"] = asyncio.ensure_future(
                        self._stage(report, "profiles", self.profile_service.run(self.config, trajectories, self.out_dir))
                    )
                if "simulation" in stages:
                    pending["simulation"] = asyncio.ensure_future(
                        self._stage(report, "simulation", self.simulation_service.run(self.config, trajectories, self.out_dir))
                    )

            await asyncio.gather(*pending.values())

            if "analysis" in stages and trajectories is not None:
                await self._analysis(report, trajectories, "simulation" in stages)
        finally:
            self.executor.shutdown(wait=False)

        report.summary_path = write_summary(report.criteria, report.failures, self.out_dir / "summary.csv")
        logger.info(
            f"Run finished: {sum(c.passed for c in report.criteria)}/{len(report.criteria)} criteria passed, "
            f"{len(report.failures)} stage failures"
        )
        return report

    async def _analysis(self, report: RunReport, trajectories, simulated: bool) -> None:
        if simulated:
            sims = report.results.get("simulation")
            if sims is None:
                self._skip(report, "analysis", "simulation")
                return
        else:
            try:
                sims = self.simulation_service.load(self.config, self.out_dir)
            except Exception as e:
                logger.error(f"Failed to load snapshots: {str(e)}")
                report.failures["analysis"] = f"no snapshots: {str(e)}"
                return
            report.criteria.extend(sims.criteria)
        profiles = report.results.get("profiles")
        await self._stage(
            report,
            "analysis",
            self.analysis_service.run(
                self.config,
                trajectories,
                sims.runs,
                profiles.profiles if profiles is not None else None,
                self.out_dir,
            ),
        )


async def run_experiment_async(
    config: ExperimentConfig, stages: Iterable[str] = STAGES, out_dir: Optional[Path] = None, threads: Optional[int] = None
) -> RunReport:
    return await ExperimentPipeline(config, out_dir, threads).run(stages)


def run_experiment(
    config: ExperimentConfig, stages: Iterable[str] = STAGES, out_dir: Optional[Path] = None, threads: Optional[int] = None
) -> RunReport:
    """Execute the pipeline and return the report; the artifact directory is report.out_dir."""
    return asyncio.run(run_experiment_async(config, stages, out_dir, threads))
