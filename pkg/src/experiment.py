"""Experiment configuration files."""

import configparser
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .config import settings
from .exceptions import ConfigurationError
from .point_vortex import VortexConfiguration

logger = logging.getLogger(__name__)

BOX_MARGIN = 8.0

LIST_FIELDS = {
    "vortices": {"x1", "x2", "alpha"},
    "physics": {"nu_list"},
    "analysis": {"times", "remainder_nus", "deviation_nus"},
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class VorticesSection(_Section):
    x1: List[float]
    x2: List[float]
    alpha: List[float]

    @model_validator(mode="after")
    def check_lengths(self) -> "VorticesSection":
        if not (len(self.x1) == len(self.x2) == len(self.alpha)) or not self.alpha:
            raise ValueError("x1, x2 and alpha must be non-empty lists of equal length")
        return self


class PhysicsSection(_Section):
    nu_list: List[float] = Field(..., min_length=1)
    T: float = Field(..., gt=0.0)
    t0_fraction: float = Field(0.01, gt=0.0, lt=1.0)
    t0: Optional[float] = Field(None, gt=0.0)

    @field_validator("nu_list")
    @classmethod
    def check_decreasing(cls, value: List[float]) -> List[float]:
        if any(nu <= 0.0 for nu in value):
            raise ValueError("viscosities must be positive")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("nu_list must be strictly decreasing")
        return value


class GridSection(_Section):
    n: int = Field(512, ge=8)
    box: float = Field(8.0, gt=0.0)
    plane_correction: bool = True

    @field_validator("n")
    @classmethod
    def check_power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError("n must be a power of two")
        return value


class AnalysisSection(_Section):
    beta: float = Field(default_factory=lambda: settings.x_norm_beta, gt=0.0, lt=1.0)
    times: Optional[List[float]] = None
    n_times: int = Field(8, ge=1)
    vortex: int = Field(0, ge=0)
    remainder_nus: Optional[List[float]] = None
    deviation_nus: Optional[List[float]] = None
    deviation_T: Optional[float] = Field(None, gt=0.0)
    run_pv: bool = True
    run_profiles: bool = True
    run_expansion: bool = True
    run_simulation: bool = True
    run_analysis: bool = True
    box_doubling: bool = False


class OutputSection(_Section):
    dir: Path = Field(default_factory=lambda: settings.output_dir)


class ExperimentConfig(BaseModel):
    """Validated experiment: vortices, viscosity sweep, grid, analysis toggles and output."""

    name: str = "experiment"
    source: Optional[Path] = None
    vortices: VorticesSection
    physics: PhysicsSection
    grid: GridSection = Field(default_factory=GridSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def check_vortex_index(self) -> "ExperimentConfig":
        if self.analysis.vortex >= len(self.vortices.alpha):
            raise ValueError("analysis.vortex must index a configured vortex")
        return self

    @model_validator(mode="after")
    def check_box_size(self) -> "ExperimentConfig":
        d = self.max_pair_distance()
        if d > 0.0 and self.grid.box < BOX_MARGIN * d:
            logger.warning(
                f"Box {self.grid.box:g} is under {BOX_MARGIN:g} times the widest pair distance {d:.4g}; "
                "periodic images will bias the profiles"
            )
        return self

    @property
    def nus(self) -> List[float]:
        return list(self.physics.nu_list)

    def vortex_config(self, nu: float = 0.0) -> VortexConfiguration:
        positions = np.column_stack([self.vortices.x1, self.vortices.x2])
        return VortexConfiguration(positions, np.array(self.vortices.alpha), nu=nu, T=self.physics.T)

    def max_pair_distance(self) -> float:
        z = self.vortex_config().positions
        if len(z) < 2:
            return 0.0
        return float(max(np.hypot(*(z[i] - z[j])) for i in range(len(z)) for j in range(i + 1, len(z))))

    def box_margin(self) -> float:
        """Box side over the widest initial pair distance; infinite for a single vortex."""
        d = self.max_pair_distance()
        return self.grid.box / d if d > 0.0 else float("inf")

    def turnover_time(self) -> float:
        config = self.vortex_config()
        if config.size < 2:
            return self.physics.T
        z = config.positions
        d = min(
            float(np.hypot(*(z[i] - z[j]))) for i in range(config.size) for j in range(i + 1, config.size)
        )
        return d**2 / config.abs_circulation

    def start_time(self, nu: float) -> float:
        """t0 = max(t0_fraction T0, (3 dx)^2 / nu) unless t0 is given explicitly."""
        if self.physics.t0 is not None:
            return self.physics.t0
        dx = self.grid.box / self.grid.n
        floor = (3.0 * dx) ** 2 / nu
        t0 = self.physics.t0_fraction * self.turnover_time()
        if floor > t0:
            logger.warning(f"t0 raised from {t0:.4g} to the resolution floor {floor:.4g} for nu={nu:g}")
        return max(t0, floor)

    def output_times(self, t0: float) -> List[float]:
        if self.analysis.times:
            return sorted(t for t in self.analysis.times if t >= t0)
        return [float(t) for t in np.linspace(t0, self.physics.T, self.analysis.n_times + 1)[1:]]


def _split_list(raw: str) -> List[str]:
    return [item.strip() for item in raw.replace(";", ",").split(",") if item.strip()]


def _section_dict(parser: configparser.ConfigParser, section: str) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for key, raw in parser.items(section):
        values[key] = _split_list(raw) if key in LIST_FIELDS.get(section, set()) else raw.strip()
    return values


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Read an INI experiment file; every failure names the dotted offending key."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep T and other case-sensitive keys
    try:
        read = parser.read(path)
    except configparser.Error as e:
        raise ConfigurationError(f"Failed to parse {path}: {str(e)}", key="file")
    if not read:
        raise ConfigurationError(f"Experiment file not found: {path}", key="file")

    for required in ("vortices", "physics"):
        if not parser.has_section(required):
            raise ConfigurationError(f"Missing section [{required}] in {path}", key=required)

    data: Dict[str, Any] = {"name": path.stem, "source": path}
    for section in parser.sections():
        if section not in ExperimentConfig.model_fields or section in ("name", "source"):
            raise ConfigurationError(f"Unknown section [{section}] in {path}", key=section)
        data[section] = _section_dict(parser, section)

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        location = [str(part) for part in error["loc"] if not isinstance(part, int)]
        if location:
            key = ".".join(location)
        else:
            key = "analysis.vortex" if "analysis.vortex" in error["msg"] else "experiment"
        raise ConfigurationError(f"Invalid value for {key}: {error['msg']}", key=key)

    logger.info(f"Loaded experiment {config.name} with {len(config.nus)} viscosities")
    return config
