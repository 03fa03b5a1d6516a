"""Command-line interface for surfpinn."""

import functools
import logging
import sys
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence

import click
import torch
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from .exceptions import AcceptanceFailure, SurfPinnError
from .geometry import available_surfaces
from .harness import (
    ExperimentConfig,
    TrainKind,
    architecture_sweep,
    check_convergence,
    check_experiment,
    check_sampling,
    check_suite,
    check_sweep,
    convergence_study,
    load_config,
    manifold_suite,
    run_experiment,
    sampling_comparison,
)
from .net import architecture
from .oracles import run_derivative_checks
from .sampling import load_or_generate, random_points
from .settings import LOG_LEVELS, Settings, load_settings

console = Console()
logger = logging.getLogger(__name__)


def setup_logging(level: str) -> None:
    """Route all package logging through a rich handler on the root logger."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=console, show_path=False, rich_tracebacks=True))
    root.setLevel(level.upper())


def parse_ints(values: Iterable[str]) -> List[int]:
    """Integers from repeated and/or comma-separated option values."""
    out = []
    for value in values:
        for part in str(value).split(","):
            part = part.strip()
            if part:
                try:
                    out.append(int(part))
                except ValueError as e:
                    raise click.BadParameter(f"not an integer: {part!r}") from e
    return out


def _settings() -> Settings:
    ctx = click.get_current_context()
    return ctx.obj


def command(func: Callable) -> Callable:
    """Shared ``--log-level`` option and error handling for every subcommand."""

    @click.option(
        "--log-level",
        type=click.Choice(LOG_LEVELS, case_sensitive=False),
        default=None,
        help="Logging level (default: SURFPINN_LOG_LEVEL or INFO)",
    )
    @functools.wraps(func)
    def wrapper(*args, log_level: Optional[str] = None, **kwargs):
        settings = _settings()
        setup_logging(log_level or settings.log_level)
        if settings.num_threads:
            torch.set_num_threads(settings.num_threads)
        try:
            return func(*args, **kwargs)
        except AcceptanceFailure as e:
            console.print(f"[red]✗ Acceptance check failed:[/red] {e}")
            sys.exit(1)
        except SurfPinnError as e:
            console.print(f"[red]Error: {e}")
            sys.exit(1)

    return wrapper


def _finish(failures: Sequence[str], strict: bool) -> None:
    for failure in failures:
        console.print(f"[yellow]! {failure}")
    if failures and strict:
        raise AcceptanceFailure("; ".join(failures))
    if not failures:
        console.print("[green]✓ All acceptance checks passed")


def _base_config(config: Optional[Path]) -> ExperimentConfig:
    if config is not None:
        return load_config(config)
    settings = _settings()
    return ExperimentConfig(output_dir=settings.output_dir / "experiment",
                            points_dir=settings.cache_dir)


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4e}"


@click.group()
@click.version_option(__version__, prog_name="surfpinn")
@click.pass_context
def cli(ctx: click.Context) -> None:
    """surfpinn - neural-network solvers for elliptic PDEs on closed surfaces."""
    ctx.obj = load_settings()


@cli.command()
@click.argument("surface", type=click.Choice(available_surfaces()))
@click.option("--count", type=int, required=True, help="Number of points")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--kind", type=click.Choice(["quasi_uniform", "random"]), default="quasi_uniform",
              show_default=True)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None,
              help="Directory for the CSV (default: SURFPINN_POINTS_DIR)")
@command
def sample(surface: str, count: int, seed: int, kind: str, output_dir: Optional[Path]) -> None:
    """Generate a point set on SURFACE and write it as CSV."""
    output_dir = output_dir or _settings().cache_dir
    console.print(f"[yellow]Generating {count} {kind} points on {surface}...")
    if kind == "random":
        points = random_points(surface, count, seed)
        path = points.save_csv(output_dir)
    else:
        points = load_or_generate(surface, count, seed, output_dir)
        path = output_dir / points.filename
    console.print(f"[green]✓ {len(points)} points written to {path}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="Experiment configuration (JSON or YAML)")
@click.option("--strict", is_flag=True, help="Exit nonzero when an acceptance check fails")
@command
def train(config_path: Path, strict: bool) -> None:
    """Run one experiment from a configuration file."""
    cfg = load_config(config_path)
    record = run_experiment(cfg)
    table = Table(title=f"{cfg.name}: {cfg.problem} on {cfg.surface}")
    table.add_column("seed", justify="right")
    table.add_column("L2 error", justify="right")
    table.add_column("termination")
    for seed, error, term in zip(record.seeds, record.per_seed_l2, record.terminations):
        table.add_row(str(seed), _fmt(error), term)
    console.print(table)
    console.print(f"Mean L2 error: [bold]{_fmt(record.mean_l2)}[/bold]")
    _finish(check_experiment(record, cfg), strict)


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="Base experiment configuration")
@click.option("--n-values", multiple=True, default=("10,100,500,1500,2500",), show_default=True,
              help="Training-set sizes, repeated or comma-separated")
@click.option("--strict", is_flag=True)
@command
def convergence(config_path: Optional[Path], n_values: Sequence[str], strict: bool) -> None:
    """Error against the number of training points."""
    result = convergence_study(_base_config(config_path), parse_ints(n_values))
    table = Table(title="Convergence")
    for column in ("N", "mean L2", "local slope"):
        table.add_column(column, justify="right")
    for row in result.rows:
        table.add_row(str(row.n), _fmt(row.mean_l2),
                      "-" if row.slope is None else f"{row.slope:.2f}")
    console.print(table)
    console.print(f"Fitted slope: [bold]{result.slope}[/bold], error ratio {result.ratio}")
    _finish(check_convergence(result), strict)


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--width", "widths", multiple=True, default=("50",), show_default=True)
@click.option("--depth", "depths", multiple=True, default=("4",), show_default=True)
@click.option("--strict", is_flag=True)
@command
def sweep(config_path: Optional[Path], widths: Sequence[str], depths: Sequence[str],
          strict: bool) -> None:
    """Error for each combination of network width and depth."""
    arches = [architecture(w, d) for d in parse_ints(depths) for w in parse_ints(widths)]
    rows = architecture_sweep(_base_config(config_path), arches)
    table = Table(title="Architecture sweep")
    for column in ("width", "depth", "mean L2"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(str(row.width), str(row.depth), _fmt(row.mean_l2))
    console.print(table)
    _finish(check_sweep(rows), strict)


@cli.command()
@click.option("--seeds", multiple=True, default=("0,1,2,3,4,5,6,7,8,9",), show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="Base configuration for optimizer and network settings")
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--strict", is_flag=True)
@command
def suite(seeds: Sequence[str], config_path: Optional[Path], output_dir: Optional[Path],
          strict: bool) -> None:
    """The second manufactured problem on the four suite manifolds."""
    output_dir = output_dir or _settings().output_dir / "suite"
    rows = manifold_suite(parse_ints(seeds), output_dir, _base_config(config_path))
    table = Table(title="Manifold suite")
    for column in ("manifold", "test points", "mean L2", "threshold", "passed"):
        table.add_column(column)
    for row in rows:
        table.add_row(row.manifold, str(row.test_count), _fmt(row.mean_l2),
                      f"{row.threshold:.1e}", "[green]yes" if row.passed else "[red]no")
    console.print(table)
    _finish(check_suite(rows), strict)


@cli.command("compare-sampling")
@click.option("--seeds", multiple=True, default=("0,1,2,3,4,5,6,7,8,9",), show_default=True)
@click.option("--quasi-kind", type=click.Choice(["quasi_uniform_subset", "quasi_uniform"]),
              default="quasi_uniform_subset", show_default=True,
              help="Subset of the test points, or a minimum-energy training set of its own")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--strict", is_flag=True)
@command
def compare_sampling(seeds: Sequence[str], quasi_kind: str, config_path: Optional[Path],
                     output_dir: Optional[Path], strict: bool) -> None:
    """Quasi-uniform against random training points on the torus."""
    output_dir = output_dir or _settings().output_dir / "sampling"
    result = sampling_comparison(parse_ints(seeds), output_dir, _base_config(config_path),
                                 quasi_kind=TrainKind(quasi_kind))
    console.print(f"Quasi-uniform mean L2: [bold]{_fmt(result.quasi_uniform)}[/bold]")
    console.print(f"Random mean L2:        [bold]{_fmt(result.random)}[/bold]")
    _finish(check_sampling(result), strict)


@cli.command("check-derivatives")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--strict", is_flag=True)
@command
def check_derivatives(seed: int, strict: bool) -> None:
    """Finite-difference and closed-form checks of every derivative."""
    records = run_derivative_checks(seed)
    table = Table(title="Derivative checks")
    for column in ("check", "error", "tolerance", "ok"):
        table.add_column(column)
    for r in records:
        table.add_row(r.name, f"{r.error:.3e}", f"{r.tolerance:.0e}",
                      "[green]✓" if r.passed else "[red]✗")
    console.print(table)
    _finish([r.name for r in records if not r.passed], strict)


def main() -> None:
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
