"""Tests for experiment file loading."""

import logging
from pathlib import Path

import pytest

from src.config import PROJECT_ROOT
from src.exceptions import ConfigurationError
from src.experiment import load_experiment_config

BASE = """
[vortices]
x1 = -0.5, 0.5
x2 = 0.0, 0.0
alpha = 1.0, 1.0

[physics]
nu_list = 0.04, 0.02, 0.01
T = 0.5
"""


def write_cfg(tmp_path: Path, text: str, name: str = "case.cfg") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def error_key(path: Path) -> str:
    with pytest.raises(ConfigurationError) as info:
        load_experiment_config(path)
    return info.value.details["key"]


class TestLoading:
    def test_shipped_experiment(self):
        config = load_experiment_config(PROJECT_ROOT / "config" / "experiments" / "quick_pair.cfg")
        assert config.name == "quick_pair"
        assert config.nus == [0.04, 0.02, 0.01]
        assert config.grid.n == 256
        assert config.analysis.deviation_T == 20.0
        assert config.analysis.deviation_nus == [0.008, 0.004, 0.002, 0.001]
        assert config.output.dir == Path("runs/quick_pair")

    def test_defaults(self, tmp_path):
        config = load_experiment_config(write_cfg(tmp_path, BASE))
        assert config.grid.n == 512
        assert config.grid.plane_correction
        assert config.analysis.vortex == 0
        assert config.analysis.run_simulation
        assert config.source == tmp_path / "case.cfg"

    def test_vortex_config(self, tmp_path):
        vortices = load_experiment_config(write_cfg(tmp_path, BASE)).vortex_config(0.02)
        assert vortices.size == 2
        assert vortices.nu == 0.02
        assert vortices.T == 0.5

    def test_missing_file(self, tmp_path):
        assert error_key(tmp_path / "absent.cfg") == "file"

    def test_unparseable_file(self, tmp_path):
        assert error_key(write_cfg(tmp_path, "x1 = 1\n")) == "file"

    def test_missing_section(self, tmp_path):
        assert error_key(write_cfg(tmp_path, BASE.split("[physics]")[0])) == "physics"

    def test_unknown_section(self, tmp_path):
        assert error_key(write_cfg(tmp_path, BASE + "\n[plots]\nstyle = dark\n")) == "plots"

    def test_unknown_key(self, tmp_path):
        assert error_key(write_cfg(tmp_path, BASE + "\n[grid]\ncolour = red\n")) == "grid.colour"

    def test_increasing_viscosities(self, tmp_path):
        text = BASE.replace("0.04, 0.02, 0.01", "0.01, 0.02")
        assert error_key(write_cfg(tmp_path, text)) == "physics.nu_list"

    def test_grid_size_power_of_two(self, tmp_path):
        assert error_key(write_cfg(tmp_path, BASE + "\n[grid]\nn = 100\n")) == "grid.n"

    def test_unequal_vortex_lists(self, tmp_path):
        text = BASE.replace("alpha = 1.0, 1.0", "alpha = 1.0")
        assert error_key(write_cfg(tmp_path, text)) == "vortices"

    def test_vortex_index(self, tmp_path):
        assert error_key(write_cfg(tmp_path, BASE + "\n[analysis]\nvortex = 3\n")) == "analysis.vortex"


class TestTimes:
    def test_resolution_floor(self, tmp_path):
        config = load_experiment_config(write_cfg(tmp_path, BASE + "\n[grid]\nn = 256\nbox = 4.0\n"))
        floor = (3.0 * 4.0 / 256) ** 2
        assert config.start_time(0.04) == pytest.approx(floor / 0.04)
        assert config.start_time(0.01) == pytest.approx(floor / 0.01)

    def test_fraction_of_turnover(self, tmp_path):
        config = load_experiment_config(write_cfg(tmp_path, BASE + "\n[grid]\nn = 4096\nbox = 4.0\n"))
        assert config.turnover_time() == pytest.approx(0.5)
        assert config.start_time(0.04) == pytest.approx(0.01 * 0.5)

    def test_explicit_start(self, tmp_path):
        text = BASE.replace("T = 0.5", "T = 0.5\nt0 = 0.1")
        assert load_experiment_config(write_cfg(tmp_path, text)).start_time(0.01) == 0.1

    def test_evenly_spaced_outputs(self, tmp_path):
        config = load_experiment_config(write_cfg(tmp_path, BASE + "\n[analysis]\nn_times = 2\n"))
        assert config.output_times(0.1) == pytest.approx([0.3, 0.5])

    def test_listed_outputs(self, tmp_path):
        config = load_experiment_config(write_cfg(tmp_path, BASE + "\n[analysis]\ntimes = 0.4, 0.05, 0.2\n"))
        assert config.output_times(0.1) == [0.2, 0.4]

    def test_semicolon_separated_list(self, tmp_path):
        text = BASE.replace("0.04, 0.02, 0.01", "0.02 ; 0.01 ; 0.005")
        assert load_experiment_config(write_cfg(tmp_path, text)).nus == [0.02, 0.01, 0.005]


class TestBoxSize:
    @pytest.fixture
    def experiment_records(self, caplog, monkeypatch):
        experiment_logger = logging.getLogger("src.experiment")
        monkeypatch.setattr(experiment_logger, "disabled", False)
        experiment_logger.addHandler(caplog.handler)
        caplog.set_level(logging.WARNING, logger="src.experiment")
        yield caplog
        experiment_logger.removeHandler(caplog.handler)

    def test_small_box_warns(self, tmp_path, experiment_records):
        config = load_experiment_config(write_cfg(tmp_path, BASE + "\n[grid]\nbox = 4.0\n"))
        assert config.max_pair_distance() == pytest.approx(1.0)
        assert config.box_margin() == pytest.approx(4.0)
        assert any("periodic images" in r.getMessage() for r in experiment_records.records)

    def test_default_box_is_quiet(self, tmp_path, experiment_records):
        config = load_experiment_config(write_cfg(tmp_path, BASE))
        assert config.box_margin() == pytest.approx(8.0)
        assert not any("periodic images" in r.getMessage() for r in experiment_records.records)

    def test_single_vortex_has_no_margin(self, tmp_path):
        text = BASE.replace("-0.5, 0.5", "0.0").replace("0.0, 0.0", "0.0").replace("1.0, 1.0", "1.0")
        config = load_experiment_config(write_cfg(tmp_path, text))
        assert config.max_pair_distance() == 0.0
        assert config.box_margin() == float("inf")

    def test_acceptance_pair_box(self):
        config = load_experiment_config(PROJECT_ROOT / "config" / "experiments" / "two_corotating.cfg")
        assert config.box_margin() >= 8.0
        assert config.analysis.box_doubling
