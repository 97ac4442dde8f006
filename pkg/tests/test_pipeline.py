"""Tests for the stage pipeline."""

import pandas as pd
import pytest

from src.config import PROJECT_ROOT
from src.experiment import load_experiment_config
from src.pipeline import COMMAND_STAGES, ExperimentPipeline, run_experiment, run_experiment_async
from src.services import trajectory_service

PAIR_CFG = """
[vortices]
x1 = -0.5, 0.5
x2 = 0.0, 0.0
alpha = 1.0, 1.0

[physics]
nu_list = 0.04, 0.02, 0.01
T = 0.5

[grid]
n = 128
box = 4.0

[analysis]
deviation_T = 20.0
run_expansion = false
"""


SINGLE_CFG = """
[vortices]
x1 = 0.0
x2 = 0.0
alpha = 1.0

[physics]
nu_list = 0.01
T = 1.05
t0 = 1.0

[grid]
n = 128
box = 4.0

[analysis]
n_times = 1
run_profiles = false
run_expansion = false
box_doubling = true
"""

@pytest.fixture
def pair_experiment(tmp_path):
    path = tmp_path / "pair.cfg"
    path.write_text(PAIR_CFG, encoding="utf-8")
    return load_experiment_config(path)


class TestPipeline:
    async def test_point_vortex_stage(self, pair_experiment, tmp_path):
        out_dir = tmp_path / "out"
        report = await run_experiment_async(pair_experiment, COMMAND_STAGES["pv"], out_dir=out_dir, threads=2)

        assert report.ok
        assert report.out_dir == out_dir
        assert (out_dir / "trajectories" / "pw.csv").exists()
        assert (out_dir / "trajectories" / "pw2_nu_0.01.csv").exists()
        assert (out_dir / "plots" / "deviation.svg").exists()

        names = {c.name: c for c in report.criteria}
        assert names["pw_period_rel_error"].passed
        assert "pw2_deviation_monotone" in names

        summary = pd.read_csv(report.summary_path)
        assert list(summary["criterion"]) == [c.name for c in report.criteria]

    async def test_disabled_stage_is_not_run(self, pair_experiment, tmp_path):
        report = await run_experiment_async(pair_experiment, COMMAND_STAGES["expand"], out_dir=tmp_path)
        assert report.ok
        assert report.criteria == []
        assert not (tmp_path / "expansion").exists()
        assert report.summary_path.exists()

    def test_synchronous_entry_point(self, pair_experiment, tmp_path):
        report = run_experiment(pair_experiment, COMMAND_STAGES["pv"], out_dir=tmp_path, threads=1)
        assert report.ok
        assert report.summary_path == tmp_path / "summary.csv"

    async def test_box_doubling_criterion(self, tmp_path):
        path = tmp_path / "single.cfg"
        path.write_text(SINGLE_CFG, encoding="utf-8")
        report = await run_experiment_async(load_experiment_config(path), COMMAND_STAGES["reproduce"], out_dir=tmp_path, threads=1)

        assert report.ok
        names = {c.name: c for c in report.criteria}
        assert names["box_doubling_delta"].value < 5e-4
        assert names["box_doubling_delta"].passed
        assert names["single_vortex_x_error"].passed

    async def test_failed_stage_skips_downstream(self, pair_experiment, tmp_path, monkeypatch):
        def broken(*args, **kwargs):
            raise RuntimeError("integrator exploded")

        monkeypatch.setattr(trajectory_service, "integrate", broken)
        report = await ExperimentPipeline(pair_experiment, tmp_path, threads=1).run(COMMAND_STAGES["profiles"])

        assert set(report.failures) == {"trajectories", "profiles"}
        assert "integrator exploded" in report.failures["trajectories"]
        assert report.failures["profiles"].startswith("skipped")
        assert not report.all_passed

        summary = pd.read_csv(report.summary_path)
        assert set(summary["criterion"]) == {"stage:trajectories", "stage:profiles"}
        assert not summary["pass"].any()


@pytest.mark.slow
class TestQuickPair:
    async def test_full_run(self, tmp_path):
        config = load_experiment_config(PROJECT_ROOT / "config" / "experiments" / "quick_pair.cfg")
        report = await run_experiment_async(config, out_dir=tmp_path)
        assert report.ok
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "analysis" / "metrics.csv").exists()
        assert (tmp_path / "plots" / "convergence.svg").exists()
        assert {"remainder_slope", "pw_period_rel_error", "mass_drift"} <= {c.name for c in report.criteria}
