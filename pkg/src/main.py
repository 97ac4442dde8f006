"""Command line entry point for the vortex interaction lab."""

import logging
import logging.config
import sys
from pathlib import Path
from typing import Optional

import typer
import yaml
from dotenv import load_dotenv
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from .config import PROJECT_ROOT, settings
from .exceptions import ConfigurationError, VortexLabException
from .experiment import load_experiment_config
from .pipeline import COMMAND_STAGES, RunReport, run_experiment

# Load environment variables
load_dotenv(PROJECT_ROOT / "config" / ".env")

app = typer.Typer(help="Numerical laboratory for interacting Lamb-Oseen vortices.", add_completion=False)
console = Console()
logger = logging.getLogger(__name__)


def setup_logging(level: Optional[str] = None) -> None:
    """Load config/logging.yml; fall back to basicConfig when it is missing."""
    level = (level or settings.log_level).upper()
    path = Path(settings.log_config)
    if path.exists():
        with open(path, "r", encoding="utf-8") as handle:
            config = yaml.safe_load(handle)
        log_dir = Path(settings.log_dir or settings.output_dir / "logs")
        log_dir.mkdir(parents=True, exist_ok=True)
        for handler in config.get("handlers", {}).values():
            if "filename" in handler:
                handler["filename"] = str(log_dir / Path(handler["filename"]).name)
        for name in ("src",):
            if name in config.get("loggers", {}):
                config["loggers"][name]["level"] = level
        logging.config.dictConfig(config)
    else:
        logging.basicConfig(
            level=getattr(logging, level),
            format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
            handlers=[logging.StreamHandler(sys.stdout)],
        )

    # numpy/scipy RuntimeWarnings go to the py.warnings logger
    logging.captureWarnings(True)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def _render(report: RunReport) -> None:
    table = Table(title=f"Summary ({report.out_dir})")
    for column in ("criterion", "value", "target", "tolerance", "pass"):
        table.add_column(column)
    for criterion in report.criteria:
        mark = "[green]yes[/green]" if criterion.passed else "[red]no[/red]"
        table.add_row(criterion.name, f"{criterion.value:.6g}", f"{criterion.target:.6g}", f"{criterion.tolerance:.3g}", mark)
    for stage, message in report.failures.items():
        table.add_row(f"stage:{stage}", "-", escape(message), "-", "[red]no[/red]")
    console.print(table)


def _execute(command: str, config_path: Path, threads: Optional[int], seed: Optional[int], log_level: Optional[str]) -> None:
    setup_logging(log_level)
    if threads is not None:
        settings.threads = threads
    if seed is not None:
        settings.seed = seed
        logger.info(f"Randomized checks seeded with {seed}")
    try:
        config = load_experiment_config(config_path)
        report = run_experiment(config, COMMAND_STAGES[command], threads=threads)
    except ConfigurationError as e:
        console.print(f"[red]Configuration error[/red] at {e.details.get('key')}: {escape(e.message)}")
        raise typer.Exit(code=1)
    except VortexLabException as e:
        logger.error(f"Run failed: {e.message}")
        console.print(f"[red]{e.error_code}[/red]: {escape(e.message)}")
        raise typer.Exit(code=1)

    _render(report)
    if not report.ok:
        raise typer.Exit(code=1)


ConfigOption = typer.Option(..., "--config", "-c", exists=True, dir_okay=False, help="Experiment file")
ThreadsOption = typer.Option(None, "--threads", min=1, help="Worker threads")
SeedOption = typer.Option(None, "--seed", help="Seed for randomized checks")
LogLevelOption = typer.Option(None, "--log-level", help="Logging level")


@app.command()
def pv(
    config: Path = ConfigOption, threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption, log_level: Optional[str] = LogLevelOption,
) -> None:
    """Point-vortex trajectories, PW2 deviation sweep and orbit period."""
    _execute("pv", config, threads, seed, log_level)


@app.command()
def profiles(
    config: Path = ConfigOption, threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption, log_level: Optional[str] = LogLevelOption,
) -> None:
    """Deformation profiles and their CSV dumps."""
    _execute("profiles", config, threads, seed, log_level)


@app.command()
def expand(
    config: Path = ConfigOption, threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption, log_level: Optional[str] = LogLevelOption,
) -> None:
    """Residuum remainder scaling."""
    _execute("expand", config, threads, seed, log_level)


@app.command()
def simulate(
    config: Path = ConfigOption, threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption, log_level: Optional[str] = LogLevelOption,
) -> None:
    """Direct simulations for every viscosity, with snapshots."""
    _execute("simulate", config, threads, seed, log_level)


@app.command()
def analyze(
    config: Path = ConfigOption, threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption, log_level: Optional[str] = LogLevelOption,
) -> None:
    """Analyse snapshots written by an earlier simulate run."""
    _execute("analyze", config, threads, seed, log_level)


@app.command()
def reproduce(
    config: Path = ConfigOption, threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption, log_level: Optional[str] = LogLevelOption,
) -> None:
    """Full pipeline: trajectories, profiles, expansion, simulations, analysis and fits."""
    _execute("reproduce", config, threads, seed, log_level)


def main() -> None:
    """Console script entry point."""
    app()


if __name__ == "__main__":
    main()
