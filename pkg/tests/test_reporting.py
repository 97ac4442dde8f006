"""Tests for tables, the summary and the SVG plots."""

import numpy as np
import pandas as pd
import pytest

from src.analysis import convergence_fit
from src.expansion import AzimuthalMode
from src.point_vortex import DeviationCurve
from src.profile_solver import build_deformation
from src.reporting import (
    PROFILE_COLUMNS,
    SUMMARY_COLUMNS,
    TRAJECTORY_COLUMNS,
    Criterion,
    plot_convergence,
    plot_deviation,
    read_summary,
    write_profile_dump,
    write_summary,
    write_trajectory_csv,
)

from .conftest import PAIR_POSITIONS, static_trajectory


class TestCriterion:
    @pytest.mark.parametrize(
        "criterion, passed",
        [
            (Criterion("slope", 1.1, 1.0, 0.2), True),
            (Criterion("slope", 1.3, 1.0, 0.2), False),
            (Criterion("error", 5e-7, 0.0, 1e-6, mode="max"), True),
            (Criterion("error", 2e-6, 0.0, 1e-6, mode="max"), False),
            (Criterion("r2", 0.995, 0.99, 0.0, mode="min"), True),
            (Criterion("r2", 0.98, 0.99, 0.0, mode="min"), False),
            (Criterion("nan", float("nan"), 0.0, 1.0), False),
        ],
    )
    def test_modes(self, criterion, passed):
        assert criterion.passed is passed

    def test_row(self):
        row = Criterion("slope", 1.1, 1.0, 0.2).as_row()
        assert list(row) == SUMMARY_COLUMNS
        assert row["pass"] is True


class TestSummary:
    def test_failures_become_rows(self, tmp_path):
        criteria = [Criterion("slope", 1.1, 1.0, 0.2), Criterion("r2", 0.5, 0.99, 0.0, mode="min")]
        path = write_summary(criteria, {"simulation": "boom"}, tmp_path / "summary.csv")
        frame = read_summary(path)
        assert list(frame.columns) == SUMMARY_COLUMNS
        assert list(frame["criterion"]) == ["slope", "r2", "stage:simulation"]
        assert list(frame["pass"]) == [True, False, False]
        assert frame.loc[2, "target"] == "boom"


class TestTables:
    def test_trajectory_csv(self, pair_trajectory, tmp_path):
        path = write_trajectory_csv(pair_trajectory, tmp_path / "traj.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == TRAJECTORY_COLUMNS == ["t", "vortex_index", "z1", "z2"]
        assert len(frame) == 2 * pair_trajectory.times.size
        assert set(frame["vortex_index"]) == {0, 1}
        first = frame[frame["t"] == frame["t"].min()].sort_values("vortex_index")
        assert np.allclose(first[["z1", "z2"]].to_numpy(), pair_trajectory.positions[0])

    def test_profile_dump_columns(self, grid, tmp_path):
        traj = static_trajectory(PAIR_POSITIONS, [1.0, 1.0])
        profiles = build_deformation(traj, 0, 1.0, 0.0, fbar=AzimuthalMode.zeros(0, grid), grid=grid)
        frame = pd.read_csv(write_profile_dump(profiles, tmp_path / "profiles.csv"))
        assert list(frame.columns) == PROFILE_COLUMNS
        assert len(frame) == 5 * grid.size
        f0 = frame[frame["profile"] == "F0"]
        assert set(f0["mode_n"]) == {2}
        assert np.allclose(f0["sin_coeff"], 0.0, atol=1e-12)


class TestPlots:
    def test_convergence_svg_has_provenance(self, tmp_path):
        nus = [0.008, 0.004, 0.002, 0.001]
        metrics = [nu**1.5 for nu in nus]
        path = plot_convergence(
            {"error": (nus, metrics, convergence_fit(nus, metrics))},
            tmp_path / "plots" / "convergence.svg",
            {"config": "quick_pair.cfg", "stage": "analysis"},
        )
        text = path.read_text(encoding="utf-8")
        assert text.startswith("<?xml")
        assert "<!-- config: quick_pair.cfg; stage: analysis; created: " in text
        assert text.index("<!--") < text.index("<svg")

    @staticmethod
    def _curve() -> DeviationCurve:
        times = np.array([0.0, 1.0])
        return DeviationCurve(
            times=times, deviation=np.array([0.0, 1e-5]), envelope=np.ones(2), k1=1.0, nu=0.01, d=1.0
        )

    def test_deviation_plot_handles_zero(self, tmp_path):
        path = plot_deviation([self._curve()], tmp_path / "deviation.svg", {"stage": "trajectories"})
        assert path.exists()
        assert "stage: trajectories" in path.read_text(encoding="utf-8")

    def test_comment_never_closes_early(self, tmp_path):
        path = plot_deviation([self._curve()], tmp_path / "dashes.svg", {"config": "a--b"})
        text = path.read_text(encoding="utf-8")
        comment = text[text.index("<!--") + 4 : text.index("-->")]
        assert "--" not in comment
        assert "a- -b" in comment
