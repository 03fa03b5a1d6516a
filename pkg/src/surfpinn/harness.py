"""Experiment orchestration: training runs, studies and their output files.

Every experiment writes into its own directory:

    config.json        the validated configuration
    metrics.json       per-seed and mean L2 errors (deterministic content only)
    timing.json        wall time
    runs.json          per-seed optimizer summaries
    errors.csv         per-point errors of the best seed
    best_params.npz    parameters of the best seed
"""

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator
from tabulate import tabulate

from .exceptions import ConfigError, ExperimentError, InvalidArchitecture, ZeroReference
from .geometry import available_surfaces
from .net import architecture, forward, validate_layer_sizes
from .optim import LbfgsConfig, RunResult, multi_seed_train
from .pde import available_problems, manufactured_problem
from .sampling import PointSet, SamplingConfig, load_or_generate, random_points, random_subset
from .utils import ensure_directory_exists, write_json

logger = logging.getLogger(__name__)

ERRORS_HEADER = "x,y,z,u_ref,u_pred,abs_err"

# Test-set sizes and mean-L2 acceptance thresholds of the manifold suite.
SUITE_MANIFOLDS: Dict[str, Dict[str, float]] = {
    "cdp": {"test_count": 3996, "threshold": 1.2e-2},
    "bretzel2": {"test_count": 3690, "threshold": 1.6e-2},
    "orthocircle": {"test_count": 4286, "threshold": 4.2e-2},
    "rbc": {"test_count": 4000, "threshold": 2.4e-2},
}
SUITE_TRAIN_COUNT = 500
CONVERGENCE_MIN_RATIO = 10.0
CONVERGENCE_SLOPE_RANGE = (1.0, 2.5)
SAMPLING_MAX_RATIO = 3.0


class TrainKind(str, Enum):
    """Where the training points come from."""

    QUASI_UNIFORM_SUBSET = "quasi_uniform_subset"
    QUASI_UNIFORM = "quasi_uniform"
    RANDOM = "random"


class ExperimentConfig(BaseModel):
    """One training experiment: problem, points, network, seeds and optimizer."""

    name: str = "experiment"
    problem: str = "example1"
    surface: str = "sphere"
    train_count: int = Field(2500, ge=1)
    train_kind: TrainKind = TrainKind.QUASI_UNIFORM_SUBSET
    train_seed: int = 0
    test_count: int = Field(2500, ge=2)
    test_seed: int = 0
    arch: List[int] = Field(default_factory=lambda: architecture(50, 4))
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    optimizer: LbfgsConfig = Field(default_factory=LbfgsConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    output_dir: Path = Path("runs/experiment")
    points_dir: Optional[Path] = None
    workers: int = Field(1, ge=1)
    max_mean_l2: Optional[float] = Field(
        None, gt=0.0, description="Acceptance threshold checked with --strict"
    )
    max_best_l2: Optional[float] = Field(
        None, gt=0.0, description="Best-seed acceptance threshold checked with --strict"
    )

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        try:
            validate_layer_sizes(self.arch)
        except InvalidArchitecture as e:
            raise ValueError(str(e)) from e
        if self.problem not in available_problems():
            raise ValueError(f"Unknown problem '{self.problem}'")
        if self.surface not in available_surfaces():
            raise ValueError(f"Unknown surface '{self.surface}'")
        if not self.seeds:
            raise ValueError("At least one seed is required")
        if (
            self.train_kind is TrainKind.QUASI_UNIFORM_SUBSET
            and self.train_count > self.test_count
        ):
            raise ValueError(
                f"train_count ({self.train_count}) exceeds test_count ({self.test_count}) "
                "for a subset of the test points"
            )
        return self

    def derive(self, **changes: Any) -> "ExperimentConfig":
        """A validated copy with some fields replaced."""
        return parse_config({**self.model_dump(), **changes})


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment configuration: {e}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read an experiment configuration from JSON or YAML.

    Raises:
        ConfigError: If the file cannot be read or does not validate
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            if path.suffix.lower() in (".yaml", ".yml"):
                data = yaml.safe_load(f)
            else:
                data = json.load(f)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: the configuration must be a mapping")
    return parse_config(data)


class MetricsRecord(BaseModel):
    """Errors of one experiment; the mean is taken over successful seeds."""

    name: str
    seeds: List[int]
    per_seed_l2: List[Optional[float]]
    mean_l2: Optional[float]
    best_seed: Optional[int]
    best_l2: Optional[float]
    final_losses: List[Optional[float]]
    terminations: List[str]
    failed: bool = False
    failure: Optional[str] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    best_abs_errors: List[float] = Field(default_factory=list, exclude=True)
    wall_time: float = Field(0.0, exclude=True)


def l2_error(reference: Sequence[float], predicted: Sequence[float]) -> float:
    """Relative discrete L2 error sqrt(sum (u - v)^2) / sqrt(sum u^2).

    Raises:
        ZeroReference: If the reference values are all zero
        ExperimentError: If the inputs are empty or differ in length
    """
    reference = np.asarray(reference, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if reference.shape != predicted.shape or reference.size == 0:
        raise ExperimentError(
            f"l2_error needs equal nonempty inputs, got {reference.shape} and {predicted.shape}"
        )
    norm = float(np.sum(reference * reference))
    if norm == 0.0:
        raise ZeroReference("The reference solution vanishes at every test point")
    return math.sqrt(float(np.sum((reference - predicted) ** 2))) / math.sqrt(norm)


def _points_dir(cfg: ExperimentConfig) -> Path:
    return cfg.points_dir if cfg.points_dir is not None else cfg.output_dir.parent / "points"


def _test_points(cfg: ExperimentConfig) -> PointSet:
    return load_or_generate(cfg.surface, cfg.test_count, cfg.test_seed, _points_dir(cfg),
                            cfg.sampling)


def select_training(cfg: ExperimentConfig, test: PointSet) -> PointSet:
    """Training points for ``cfg``.

    A random subset of the test points, a quasi-uniform set of exactly
    ``train_count`` points of its own, or fresh random points.
    """
    if cfg.train_kind is TrainKind.RANDOM:
        return random_points(cfg.surface, cfg.train_count, cfg.train_seed)
    if cfg.train_kind is TrainKind.QUASI_UNIFORM:
        return load_or_generate(cfg.surface, cfg.train_count, cfg.train_seed, _points_dir(cfg),
                                cfg.sampling)
    if cfg.train_count == len(test):
        return test
    return random_subset(test, cfg.train_count, cfg.train_seed)


def _evaluate(
    cfg: ExperimentConfig, runs: List[RunResult], test: PointSet, u_ref: np.ndarray
) -> MetricsRecord:
    per_seed: List[Optional[float]] = []
    predictions: Dict[int, np.ndarray] = {}
    for run in runs:
        if not run.succeeded:
            per_seed.append(None)
            continue
        predictions[run.seed] = forward(run.final_params, test.positions)
        per_seed.append(l2_error(u_ref, predictions[run.seed]))
        logger.info(f"{cfg.name}: seed {run.seed} L2 error {per_seed[-1]:.4e}")

    valid = [(e, r.seed) for e, r in zip(per_seed, runs) if e is not None]
    failures = [f"seed {r.seed}: {r.message}" for r in runs if not r.succeeded]
    record = MetricsRecord(
        name=cfg.name,
        seeds=[r.seed for r in runs],
        per_seed_l2=per_seed,
        mean_l2=float(np.mean([e for e, _ in valid])) if valid else None,
        best_seed=min(valid)[1] if valid else None,
        best_l2=min(valid)[0] if valid else None,
        final_losses=[r.final_loss for r in runs],
        terminations=[r.termination.value for r in runs],
        failed=bool(failures),
        failure="; ".join(failures) or None,
        config=cfg.model_dump(mode="json"),
    )
    if record.best_seed is not None:
        record.best_abs_errors = np.abs(u_ref - predictions[record.best_seed]).tolist()
    return record


def write_experiment(
    cfg: ExperimentConfig,
    record: MetricsRecord,
    runs: List[RunResult],
    test: PointSet,
    u_ref: np.ndarray,
) -> Path:
    """Write all per-experiment files into ``cfg.output_dir``."""
    out = cfg.output_dir
    write_json(out / "config.json", cfg.model_dump(mode="json"))
    write_json(out / "metrics.json", record.model_dump(mode="json"))
    write_json(out / "timing.json", {"wall_time_s": record.wall_time})
    write_json(out / "runs.json", [r.summary().to_dict() for r in runs])
    if record.best_seed is not None:
        best = next(r for r in runs if r.seed == record.best_seed)
        u_pred = forward(best.final_params, test.positions)
        table = np.column_stack([test.positions, u_ref, u_pred, np.abs(u_ref - u_pred)])
        errors_path = ensure_directory_exists(out / "errors.csv")
        np.savetxt(errors_path, table, fmt="%.17g", delimiter=",",
                   header=ERRORS_HEADER, comments="")
        best.final_params.save(out / "best_params.npz")
    logger.info(f"{cfg.name}: results written to {out}")
    return out


def run_experiment(cfg: ExperimentConfig) -> MetricsRecord:
    """Sample, train every seed, evaluate on the test points and write the results.

    Args:
        cfg: Experiment configuration

    Returns:
        The metrics record (also written to ``metrics.json``)
    """
    start = time.perf_counter()
    logger.info(
        f"{cfg.name}: {cfg.problem} on {cfg.surface}, {cfg.train_count} "
        f"{cfg.train_kind.value} training points, arch {cfg.arch}, seeds {cfg.seeds}"
    )
    problem = manufactured_problem(cfg.problem, cfg.surface)
    test = _test_points(cfg)
    training = select_training(cfg, test)
    runs = multi_seed_train(problem, training, cfg.seeds, cfg.optimizer, cfg.arch, cfg.workers)
    u_ref = problem.reference_u(test.positions)
    record = _evaluate(cfg, runs, test, u_ref)
    record.wall_time = time.perf_counter() - start
    write_experiment(cfg, record, runs, test, u_ref)
    if record.mean_l2 is not None:
        logger.info(f"{cfg.name}: mean L2 error {record.mean_l2:.4e} ({record.wall_time:.1f} s)")
    else:
        logger.error(f"{cfg.name}: every seed failed")
    return record


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    path = ensure_directory_exists(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
    return path


@dataclass
class ConvergenceRow:
    n: int
    mean_l2: Optional[float]
    slope: Optional[float] = None


@dataclass
class ConvergenceResult:
    """Mean errors against N with local and fitted log-log slopes."""

    rows: List[ConvergenceRow]
    slope: Optional[float]
    ratio: Optional[float]
    fit_range: List[int] = field(default_factory=list)


def _local_slope(prev: ConvergenceRow, row: ConvergenceRow) -> Optional[float]:
    if not prev.mean_l2 or not row.mean_l2:
        return None
    return math.log(row.mean_l2 / prev.mean_l2) / math.log(row.n / prev.n)


def fit_convergence(rows: List[ConvergenceRow]) -> ConvergenceResult:
    """Fit log error against log N from the first N up to the smallest error."""
    for prev, row in zip(rows, rows[1:]):
        row.slope = _local_slope(prev, row)
    usable = [r for r in rows if r.mean_l2]
    slope = None
    fit_range: List[int] = []
    if len(usable) >= 2:
        stop = int(np.argmin([r.mean_l2 for r in usable]))
        fitted = usable[: stop + 1]
        if len(fitted) >= 2:
            slope = float(np.polyfit(np.log([r.n for r in fitted]),
                                     np.log([r.mean_l2 for r in fitted]), 1)[0])
            fit_range = [fitted[0].n, fitted[-1].n]
    ratio = usable[0].mean_l2 / usable[-1].mean_l2 if len(usable) >= 2 else None
    return ConvergenceResult(rows, slope, ratio, fit_range)


def convergence_study(base: ExperimentConfig, n_values: Sequence[int]) -> ConvergenceResult:
    """Run ``base`` for each training-set size N and fit the convergence rate.

    Writes ``convergence.csv`` (N, mean_l2, local slope) and
    ``convergence.json`` (fitted slope and error ratio) into ``base.output_dir``.

    Raises:
        ExperimentError: If ``n_values`` is empty or not strictly ascending
    """
    n_values = [int(n) for n in n_values]
    if not n_values or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ExperimentError(f"n_values must be strictly ascending, got {n_values}")
    rows = []
    for n in n_values:
        cfg = base.derive(
            name=f"{base.name}_N{n}",
            train_count=n,
            output_dir=base.output_dir / f"N{n}",
            points_dir=base.points_dir or base.output_dir / "points",
        )
        rows.append(ConvergenceRow(n, run_experiment(cfg).mean_l2))
    result = fit_convergence(rows)
    _write_rows(
        base.output_dir / "convergence.csv",
        ["N", "mean_l2", "slope"],
        [[r.n, r.mean_l2, r.slope] for r in result.rows],
    )
    write_json(
        base.output_dir / "convergence.json",
        {"n_values": n_values, "slope": result.slope, "ratio": result.ratio,
         "fit_range": result.fit_range},
    )
    logger.info(f"Convergence: fitted slope {result.slope}, error ratio {result.ratio}")
    return result


@dataclass
class SweepRow:
    arch: List[int]
    width: int
    depth: int
    mean_l2: Optional[float]


def architecture_sweep(base: ExperimentConfig, arches: Sequence[Sequence[int]]) -> List[SweepRow]:
    """Run ``base`` for each layer layout and write ``sweep.csv``."""
    rows = []
    for arch in arches:
        arch = validate_layer_sizes(arch)
        width, depth = arch[1] if len(arch) > 2 else 0, len(arch) - 1
        cfg = base.derive(
            name=f"{base.name}_w{width}_d{depth}",
            arch=arch,
            output_dir=base.output_dir / f"w{width}_d{depth}",
            points_dir=base.points_dir or base.output_dir / "points",
        )
        rows.append(SweepRow(arch, width, depth, run_experiment(cfg).mean_l2))
    _write_rows(
        base.output_dir / "sweep.csv",
        ["arch", "width", "depth", "mean_l2"],
        [["-".join(map(str, r.arch)), r.width, r.depth, r.mean_l2] for r in rows],
    )
    return rows


@dataclass
class SuiteRow:
    manifold: str
    test_count: int
    mean_l2: Optional[float]
    threshold: float

    @property
    def passed(self) -> bool:
        return self.mean_l2 is not None and self.mean_l2 <= self.threshold


def manifold_suite(
    seeds: Sequence[int],
    output_dir: Union[str, Path] = Path("runs/suite"),
    base: Optional[ExperimentConfig] = None,
    manifolds: Optional[Sequence[str]] = None,
) -> List[SuiteRow]:
    """The second manufactured problem on each suite manifold with 500 training points.

    Writes ``suite.csv`` and a markdown table ``suite.md`` into ``output_dir``.
    """
    output_dir = Path(output_dir)
    base = base or ExperimentConfig()
    names = list(manifolds) if manifolds is not None else list(SUITE_MANIFOLDS)
    rows = []
    for name in names:
        entry = SUITE_MANIFOLDS[name]
        cfg = base.derive(
            name=f"suite_{name}",
            problem="example2",
            surface=name,
            train_count=SUITE_TRAIN_COUNT,
            train_kind=TrainKind.QUASI_UNIFORM_SUBSET,
            test_count=int(entry["test_count"]),
            seeds=list(seeds),
            output_dir=output_dir / name,
            points_dir=base.points_dir or output_dir / "points",
        )
        record = run_experiment(cfg)
        rows.append(SuiteRow(name, cfg.test_count, record.mean_l2, entry["threshold"]))
    table = [[r.manifold, r.test_count, r.mean_l2, r.threshold, r.passed] for r in rows]
    header = ["manifold", "test_count", "mean_l2", "threshold", "passed"]
    _write_rows(output_dir / "suite.csv", header, table)
    markdown = ensure_directory_exists(output_dir / "suite.md")
    markdown.write_text(tabulate(table, headers=header, tablefmt="github", floatfmt=".3e") + "\n",
                        encoding="utf-8")
    return rows


@dataclass
class SamplingComparison:
    quasi_uniform: Optional[float]
    random: Optional[float]

    @property
    def ratio(self) -> Optional[float]:
        if not self.quasi_uniform or not self.random:
            return None
        return max(self.quasi_uniform, self.random) / min(self.quasi_uniform, self.random)


def sampling_comparison(
    seeds: Sequence[int],
    output_dir: Union[str, Path] = Path("runs/sampling"),
    base: Optional[ExperimentConfig] = None,
    surface: str = "torus",
    train_count: int = 500,
    test_count: int = 2500,
    quasi_kind: TrainKind = TrainKind.QUASI_UNIFORM_SUBSET,
) -> SamplingComparison:
    """Mean errors from quasi-uniform and from random training points of equal size.

    By default the quasi-uniform arm is a random subset of the quasi-uniform
    test points; ``quasi_kind=TrainKind.QUASI_UNIFORM`` trains on a
    minimum-energy set of ``train_count`` points instead.
    """
    if quasi_kind is TrainKind.RANDOM:
        raise ExperimentError("quasi_kind must be a quasi-uniform training kind")
    output_dir = Path(output_dir)
    base = base or ExperimentConfig()
    errors = {}
    for kind in (quasi_kind, TrainKind.RANDOM):
        cfg = base.derive(
            name=f"sampling_{kind.value}",
            problem="example2",
            surface=surface,
            train_count=train_count,
            train_kind=kind,
            test_count=test_count,
            seeds=list(seeds),
            output_dir=output_dir / kind.value,
            points_dir=base.points_dir or output_dir / "points",
        )
        errors[kind] = run_experiment(cfg).mean_l2
    result = SamplingComparison(errors[quasi_kind], errors[TrainKind.RANDOM])
    write_json(
        output_dir / "comparison.json",
        {"quasi_kind": quasi_kind.value, "quasi_uniform": result.quasi_uniform,
         "random": result.random, "ratio": result.ratio},
    )
    return result


def check_experiment(record: MetricsRecord, cfg: ExperimentConfig) -> List[str]:
    """Acceptance failures of a single experiment, empty when it passes."""
    failures = []
    if record.mean_l2 is None:
        failures.append(f"{record.name}: no seed produced a result")
    elif cfg.max_mean_l2 is not None and record.mean_l2 > cfg.max_mean_l2:
        failures.append(
            f"{record.name}: mean L2 error {record.mean_l2:.3e} exceeds {cfg.max_mean_l2:.3e}"
        )
    if (
        record.best_l2 is not None
        and cfg.max_best_l2 is not None
        and record.best_l2 > cfg.max_best_l2
    ):
        failures.append(
            f"{record.name}: best-seed L2 error {record.best_l2:.3e} "
            f"exceeds {cfg.max_best_l2:.3e}"
        )
    return failures


def check_convergence(result: ConvergenceResult) -> List[str]:
    failures = []
    if result.ratio is None or result.ratio < CONVERGENCE_MIN_RATIO:
        failures.append(f"error ratio first/last N is {result.ratio}, "
                        f"needs at least {CONVERGENCE_MIN_RATIO:g}")
    low, high = CONVERGENCE_SLOPE_RANGE
    if result.slope is None or not low <= abs(result.slope) <= high:
        failures.append(f"fitted slope {result.slope} outside [{low}, {high}] in magnitude")
    return failures


def check_suite(rows: Sequence[SuiteRow]) -> List[str]:
    return [
        f"{r.manifold}: mean L2 error {r.mean_l2} exceeds {r.threshold:.1e}"
        for r in rows
        if not r.passed
    ]


def check_sampling(result: SamplingComparison) -> List[str]:
    if result.ratio is None or result.ratio >= SAMPLING_MAX_RATIO:
        return [f"quasi-uniform vs random error ratio {result.ratio} is not below "
                f"{SAMPLING_MAX_RATIO:g}"]
    return []


def check_sweep(rows: Sequence[SweepRow]) -> List[str]:
    """Mean errors across architectures must lie within one order of magnitude."""
    errors = [r.mean_l2 for r in rows]
    if any(e is None for e in errors):
        return ["some architectures produced no result"]
    if errors and max(errors) / min(errors) >= 10.0:
        return [f"architecture errors span {max(errors) / min(errors):.1f}x, "
                "more than one order of magnitude"]
    return []
