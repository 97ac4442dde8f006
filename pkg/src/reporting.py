"""CSV tables, the acceptance summary and SVG plots."""

import io
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["criterion", "value", "target", "tolerance", "pass"]
PROFILE_COLUMNS = ["profile", "r", "mode_n", "cos_coeff", "sin_coeff"]
TRAJECTORY_COLUMNS = ["t", "vortex_index", "z1", "z2"]


def write_table(rows: Iterable[Mapping[str, Any]], columns: Sequence[str], path: Path) -> Path:
    """Write rows with a fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def trajectory_rows(traj) -> List[Dict[str, Any]]:
    """One row per (time, vortex); the system and viscosity live in the file name."""
    rows = []
    for t, z in zip(traj.times, traj.positions):
        for i, (x1, x2) in enumerate(z):
            rows.append({"t": float(t), "vortex_index": i, "z1": float(x1), "z2": float(x2)})
    return rows


def write_trajectory_csv(traj, path: Path) -> Path:
    return write_table(trajectory_rows(traj), TRAJECTORY_COLUMNS, path)


def write_profile_dump(profiles, path: Path) -> Path:
    """Profiles of one (i, t, nu): columns profile, r, mode_n, cos_coeff, sin_coeff."""
    rows = [dict(zip(PROFILE_COLUMNS, row)) for row in profiles.dump_rows()]
    return write_table(rows, PROFILE_COLUMNS, path)


@dataclass
class Criterion:
    """One acceptance line of the summary."""

    name: str
    value: float
    target: float
    tolerance: float
    mode: str = "abs"

    @property
    def passed(self) -> bool:
        if self.value is None or not math.isfinite(self.value):
            return False
        if self.mode == "max":
            return self.value <= self.target + self.tolerance
        if self.mode == "min":
            return self.value >= self.target - self.tolerance
        return abs(self.value - self.target) <= self.tolerance

    def as_row(self) -> Dict[str, Any]:
        return {
            "criterion": self.name,
            "value": self.value,
            "target": self.target,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def write_summary(criteria: Sequence[Criterion], failures: Mapping[str, str], path: Path) -> Path:
    """summary.csv; failed stages appear as ``stage:<name>`` rows that never pass."""
    rows = [c.as_row() for c in criteria]
    for stage, message in failures.items():
        rows.append({"criterion": f"stage:{stage}", "value": float("nan"), "target": message, "tolerance": float("nan"), "pass": False})
    return write_table(rows, SUMMARY_COLUMNS, path)


def read_summary(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def _save_svg(fig, path: Path, provenance: Mapping[str, Any]) -> Path:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="svg")
    plt.close(fig)
    text = buffer.getvalue().decode("utf-8")
    stamp = dict(provenance)
    stamp.setdefault("created", datetime.now(timezone.utc).isoformat())
    comment = "<!-- " + "; ".join(f"{k}: {v}" for k, v in stamp.items()).replace("--", "- -") + " -->\n"
    head, sep, tail = text.partition("?>\n")
    text = head + sep + comment + tail if sep else comment + text
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.debug(f"Wrote plot {path}")
    return path


def plot_convergence(
    series: Mapping[str, Tuple[Sequence[float], Sequence[float], Optional[Any]]],
    path: Path,
    provenance: Mapping[str, Any],
    xlabel: str = "nu",
) -> Path:
    """Log-log metric against viscosity, with the fitted power law when available."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (nus, metrics, fit) in series.items():
        line = ax.loglog(nus, metrics, "o", label=label)[0]
        if fit is not None:
            grid = np.geomspace(min(nus), max(nus), 50)
            ax.loglog(grid, fit.predict(grid), "-", color=line.get_color(), label=f"{label} slope {fit.slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("metric")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path, provenance)


def plot_deviation(curves: Sequence[Any], path: Path, provenance: Mapping[str, Any]) -> Path:
    """max_i |z_i^nu - z_i^0| against time for each viscosity."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for curve in curves:
        ax.semilogy(curve.times, np.maximum(curve.deviation, 1e-300), label=f"nu={curve.nu:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("deviation")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path, provenance)


def plot_phase(
    times: Sequence[float],
    measured: Sequence[float],
    predicted: Sequence[float],
    path: Path,
    provenance: Mapping[str, Any],
) -> Path:
    """Doubled-angle quadrupole phase, measured against predicted."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(times, np.unwrap(np.asarray(predicted, dtype=float)), "-", label="predicted")
    ax.plot(times, np.unwrap(np.asarray(measured, dtype=float)), "o", label="measured")
    ax.set_xlabel("t")
    ax.set_ylabel("2 theta")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path, provenance)
