"""Profile analysis stage: norms, quadrupole fits and convergence rates."""

import asyncio
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..analysis import (
    FitResult,
    box_doubling_delta,
    convergence_fit,
    extract_rescaled_profile,
    gaussian_field,
    quadrupole_fit,
    x_norm,
)
from ..exceptions import FitError, StageError
from ..experiment import ExperimentConfig
from ..ns_sim import SimulationResult, run_simulation
from ..point_vortex import Trajectory
from ..profile_solver import DeformationProfiles, assemble_wapp
from ..reporting import Criterion, plot_convergence, plot_phase, write_table
from ..utils import run_blocking, stage_log, wrap_angle

logger = logging.getLogger(__name__)

BOX_DOUBLING_TOLERANCE = 5e-4

METRIC_COLUMNS = [
    "nu",
    "t",
    "mass",
    "x_error_gauss",
    "x_error_wapp",
    "amplitude_measured",
    "amplitude_predicted",
    "phase_measured",
    "phase_predicted",
]


@dataclass
class AnalysisResults:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    fits: Dict[str, FitResult] = field(default_factory=dict)
    criteria: List[Criterion] = field(default_factory=list)


def _lookup(profiles: Optional[Dict[float, DeformationProfiles]], t: float) -> Optional[DeformationProfiles]:
    if not profiles:
        return None
    key = min(profiles, key=lambda s: abs(s - t))
    return profiles[key] if abs(key - t) <= 1e-9 * max(1.0, t) else None


def measure_run(
    run: SimulationResult,
    traj: Trajectory,
    i: int,
    beta: float,
    profiles: Optional[Dict[float, DeformationProfiles]] = None,
) -> List[Dict[str, Any]]:
    """Metrics of vortex i at every snapshot of one simulation."""
    nan = float("nan")
    rows = []
    for snapshot in run.fields:
        t = snapshot.t
        profile = extract_rescaled_profile(snapshot, traj, i, t)
        row: Dict[str, Any] = {c: nan for c in METRIC_COLUMNS}
        row.update(nu=run.nu, t=t, mass=profile.mass(), x_error_gauss=x_norm(profile.minus(gaussian_field), beta))
        deformation = _lookup(profiles, t)
        if deformation is not None:
            wapp = assemble_wapp(deformation, run.nu * t / traj.d**2, order=1)
            row["x_error_wapp"] = x_norm(profile.minus(wapp), beta)
        if traj.config.size >= 2:
            fit = quadrupole_fit(profile, traj, i, t, run.nu)
            row.update(
                amplitude_measured=fit.amplitude_measured,
                amplitude_predicted=fit.amplitude_predicted,
                phase_measured=fit.phase_measured,
                phase_predicted=fit.phase_predicted,
            )
        rows.append(row)
    return rows


def rerun_in_doubled_box(config: ExperimentConfig, traj: Trajectory, run: SimulationResult, i: int, beta: float) -> float:
    """Repeat a run to its last snapshot with box and grid doubled; dx is unchanged."""
    t0 = config.start_time(run.nu)
    final = run.fields[-1]
    doubled = run_simulation(
        config.vortex_config(run.nu),
        t0,
        [final.t],
        2 * config.grid.n,
        2.0 * config.grid.box,
        centers=traj.position_at(t0),
        plane_correction=config.grid.plane_correction,
    )
    delta = box_doubling_delta(final, doubled.fields[-1], traj, i, beta)
    logger.info(f"Box doubling changed vortex {i} at nu={run.nu:g}, t={final.t:.4g} by {delta:.3e} in X norm")
    return delta


class AnalysisService:
    """Service comparing simulated vortex profiles with G and with w_app."""

    def __init__(self, executor: Optional[ThreadPoolExecutor] = None):
        self.executor = executor

    @stage_log("analysis")
    async def run(
        self,
        config: ExperimentConfig,
        trajectories: Dict[float, Trajectory],
        runs: Dict[float, SimulationResult],
        profiles: Optional[Dict[float, Dict[float, DeformationProfiles]]],
        out_dir: Path,
    ) -> AnalysisResults:
        try:
            i = config.analysis.vortex
            beta = config.analysis.beta
            per_nu = await asyncio.gather(
                *(
                    run_blocking(self.executor, measure_run, runs[nu], trajectories[nu], i, beta, (profiles or {}).get(nu))
                    for nu in config.nus
                )
            )
            results = AnalysisResults(rows=[row for rows in per_nu for row in rows])
            write_table(results.rows, METRIC_COLUMNS, Path(out_dir) / "analysis" / "metrics.csv")
            self._criteria(config, dict(zip(config.nus, per_nu)), results, out_dir)
            if config.analysis.box_doubling:
                nu = min(config.nus)
                delta = await run_blocking(self.executor, rerun_in_doubled_box, config, trajectories[nu], runs[nu], i, beta)
                results.criteria.append(Criterion("box_doubling_delta", delta, 0.0, BOX_DOUBLING_TOLERANCE, mode="max"))
            return results

        except Exception as e:
            logger.error(f"Failed to analyse simulations: {str(e)}")
            raise StageError(f"Failed to analyse simulations: {str(e)}", stage="analysis")

    def _criteria(
        self, config: ExperimentConfig, per_nu: Dict[float, List[Dict[str, Any]]], results: AnalysisResults, out_dir: Path
    ) -> None:
        provenance = {"config": config.source, "stage": "analysis"}
        nus = sorted(per_nu)
        sup_gauss = [max(r["x_error_gauss"] for r in per_nu[nu]) for nu in nus]

        if config.vortex_config().size < 2:
            results.criteria.append(Criterion("single_vortex_x_error", max(sup_gauss), 0.0, 1e-3, mode="max"))
            return

        sup_wapp = [max(r["x_error_wapp"] for r in per_nu[nu]) for nu in nus]
        have_wapp = not any(math.isnan(v) for v in sup_wapp)
        series: Dict[str, Any] = {"|w - G|_X": (nus, sup_gauss, None)}
        try:
            results.fits["gauss_error"] = convergence_fit(nus, sup_gauss)
            results.criteria.append(Criterion("gauss_error_slope", results.fits["gauss_error"].slope, 1.0, 0.2))
            series["|w - G|_X"] = (nus, sup_gauss, results.fits["gauss_error"])
            if have_wapp:
                results.fits["wapp_error"] = convergence_fit(nus, sup_wapp)
                results.criteria.append(Criterion("wapp_error_slope", results.fits["wapp_error"].slope, 1.5, 0.3))
                series["|w - w_app|_X"] = (nus, sup_wapp, results.fits["wapp_error"])
        except FitError as e:
            logger.warning(f"Convergence rates not fitted: {e.message}")
        plot_convergence(series, Path(out_dir) / "plots" / "convergence.svg", provenance)

        smallest = per_nu[nus[0]]
        if have_wapp:
            results.criteria.append(Criterion("wapp_residual_ratio", sup_wapp[0] / sup_gauss[0], 1.0 / 3.0, 0.0, mode="max"))
        final = smallest[-1]
        if final["amplitude_predicted"] > 0.0:
            rel = abs(final["amplitude_measured"] - final["amplitude_predicted"]) / final["amplitude_predicted"]
            results.criteria.append(Criterion("quadrupole_amplitude_rel_error", rel, 0.0, 0.2, mode="max"))
            error = abs(float(wrap_angle(final["phase_measured"] - final["phase_predicted"]))) * 180.0 / math.pi
            results.criteria.append(Criterion("quadrupole_phase_error_deg", error, 0.0, 10.0, mode="max"))
        plot_phase(
            [r["t"] for r in smallest],
            [r["phase_measured"] for r in smallest],
            [r["phase_predicted"] for r in smallest],
            Path(out_dir) / "plots" / "quadrupole_phase.svg",
            provenance,
        )
