"""Tests for the command line."""

import pandas as pd
import pytest
from typer.testing import CliRunner

from src.config import settings
from src.main import app

runner = CliRunner()

PV_CFG = """
[vortices]
x1 = -0.5, 0.5
x2 = 0.0, 0.0
alpha = 1.0, 1.0

[physics]
nu_list = 0.02, 0.01
T = 0.5

[analysis]
deviation_T = 20.0

[output]
dir = {out}
"""


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "log_dir", tmp_path / "logs")
    monkeypatch.setattr(settings, "threads", settings.threads)


class TestCli:
    def test_missing_config(self, tmp_path):
        result = runner.invoke(app, ["pv", "--config", str(tmp_path / "absent.cfg")])
        assert result.exit_code != 0

    def test_invalid_config_exits_one(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(PV_CFG.format(out=tmp_path / "out") + "\n[plots]\nstyle = dark\n", encoding="utf-8")
        result = runner.invoke(app, ["pv", "--config", str(path)])
        assert result.exit_code == 1
        assert "Unknown section [plots]" in result.stdout

    def test_pv_run(self, tmp_path):
        out = tmp_path / "out"
        path = tmp_path / "pair.cfg"
        path.write_text(PV_CFG.format(out=out), encoding="utf-8")
        result = runner.invoke(app, ["pv", "--config", str(path), "--threads", "2", "--log-level", "warning"])
        assert result.exit_code == 0, result.stdout
        assert "Summary" in result.stdout
        summary = pd.read_csv(out / "summary.csv")
        assert "pw_period_rel_error" in set(summary["criterion"])
        assert (out / "trajectories" / "pw.csv").exists()

    def test_threads_must_be_positive(self, tmp_path):
        path = tmp_path / "pair.cfg"
        path.write_text(PV_CFG.format(out=tmp_path / "out"), encoding="utf-8")
        result = runner.invoke(app, ["pv", "--config", str(path), "--threads", "0"])
        assert result.exit_code != 0
