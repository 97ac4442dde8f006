"""Residuum expansion stage."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

from ..analysis import FitResult, convergence_fit
from ..exceptions import StageError
from ..experiment import ExperimentConfig
from ..expansion import RemainderRow, remainder_scaling
from ..reporting import Criterion, plot_convergence, write_table
from ..utils import run_blocking, stage_log

logger = logging.getLogger(__name__)


@dataclass
class ExpansionResults:
    rows: List[RemainderRow] = field(default_factory=list)
    fit: Optional[FitResult] = None
    criteria: List[Criterion] = field(default_factory=list)


class ExpansionService:
    """Service measuring how the residuum remainder scales with nu t / d^2."""

    def __init__(self, executor: Optional[ThreadPoolExecutor] = None):
        self.executor = executor

    @stage_log("expansion")
    async def run(self, config: ExperimentConfig, out_dir: Path) -> ExpansionResults:
        try:
            results = ExpansionResults()
            vortices = config.vortex_config()
            if vortices.size < 2:
                logger.info("Single vortex: the residuum vanishes, nothing to expand")
                return results

            nus = config.analysis.remainder_nus or config.nus
            results.rows = await run_blocking(
                self.executor, remainder_scaling, vortices, config.analysis.vortex, config.physics.T, nus
            )
            write_table(
                [asdict(row) for row in results.rows],
                ["nu", "t", "eps", "sup_weighted_remainder"],
                Path(out_dir) / "expansion" / "remainder.csv",
            )
            if len(results.rows) >= 3:
                eps = [row.eps for row in results.rows]
                sups = [row.sup_weighted_remainder for row in results.rows]
                results.fit = convergence_fit(eps, sups)
                results.criteria.append(Criterion("remainder_slope", results.fit.slope, 1.5, 0.1))
                plot_convergence(
                    {"weighted remainder": (eps, sups, results.fit)},
                    Path(out_dir) / "plots" / "remainder.svg",
                    {"config": config.source, "stage": "expansion"},
                    xlabel="nu t / d^2",
                )
            return results

        except Exception as e:
            logger.error(f"Failed to measure the residuum remainder: {str(e)}")
            raise StageError(f"Failed to measure the residuum remainder: {str(e)}", stage="expansion")
