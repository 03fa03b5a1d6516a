"""Tests for experiment configuration, runs, studies and acceptance checks."""
import csv
import json
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from surfpinn.exceptions import ConfigError, ExperimentError, ZeroReference
from surfpinn.harness import (
    ERRORS_HEADER,
    SUITE_MANIFOLDS,
    ConvergenceRow,
    ExperimentConfig,
    SamplingComparison,
    SuiteRow,
    SweepRow,
    TrainKind,
    architecture_sweep,
    check_convergence,
    check_experiment,
    check_sampling,
    check_suite,
    check_sweep,
    convergence_study,
    fit_convergence,
    l2_error,
    load_config,
    manifold_suite,
    parse_config,
    run_experiment,
    sampling_comparison,
    select_training,
)
from surfpinn.sampling import PointSetKind

CONFIG_DIR = Path(__file__).parent.parent / "configs"


@pytest.fixture
def tiny_config(tmp_path):
    return ExperimentConfig(
        name="tiny",
        problem="example1",
        surface="sphere",
        train_count=20,
        test_count=40,
        arch=[3, 6, 1],
        seeds=[1, 0],
        optimizer={"max_iters": 3},
        sampling={"me_iters": 5},
        output_dir=tmp_path / "runs" / "tiny",
    )


def fake_record(mean_l2):
    return SimpleNamespace(mean_l2=mean_l2)


class TestL2Error:
    def test_exact_prediction(self):
        assert l2_error([1.0, 0.0], [1.0, 0.0]) == 0.0

    def test_zero_prediction(self):
        assert l2_error([1.0, 0.0], [0.0, 0.0]) == 1.0

    def test_partial_prediction(self):
        assert l2_error([3.0, 4.0], [3.0, 0.0]) == pytest.approx(0.8)

    def test_zero_reference(self):
        with pytest.raises(ZeroReference):
            l2_error([0.0, 0.0], [1.0, 1.0])

    def test_mismatched_lengths(self):
        with pytest.raises(ExperimentError):
            l2_error([1.0, 2.0], [1.0])


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.arch == [3, 50, 50, 50, 1]
        assert cfg.seeds == list(range(10))
        assert (cfg.train_count, cfg.test_count) == (2500, 2500)
        assert cfg.optimizer.memory == 10

    def test_load_json(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"name": "j", "surface": "torus", "optimizer": {"memory": 5}}))
        cfg = load_config(path)
        assert cfg.surface == "torus"
        assert cfg.optimizer.memory == 5

    def test_load_yaml(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("name: y\nproblem: example2\nseeds: [0, 1]\ntrain_kind: random\n")
        cfg = load_config(path)
        assert cfg.problem == "example2"
        assert cfg.seeds == [0, 1]
        assert cfg.train_kind is TrainKind.RANDOM

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Cannot read"):
            load_config(tmp_path / "missing.yaml")

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    @pytest.mark.parametrize(
        "changes",
        [
            {"arch": [2, 5, 1]},
            {"problem": "example3"},
            {"surface": "klein_bottle"},
            {"seeds": []},
            {"train_count": 3000},
            {"optimizer": {"wolfe_c1": 0.95}},
        ],
    )
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            parse_config(changes)

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
    def test_shipped_configs_validate(self, path):
        assert load_config(path).name

    def test_random_training_may_exceed_test_count(self):
        cfg = parse_config({"train_kind": "random", "train_count": 3000})
        assert cfg.train_count == 3000

    def test_derive_revalidates(self, tiny_config):
        assert tiny_config.derive(train_count=30).train_count == 30
        with pytest.raises(ConfigError):
            tiny_config.derive(train_count=41)


class TestSelectTraining:
    def test_subset_of_test_points(self, tiny_config, sphere_points):
        cfg = tiny_config.derive(test_count=100)
        training = select_training(cfg, sphere_points)
        assert training.kind is PointSetKind.RANDOM_SUBSET
        assert len(training) == 20

    def test_full_test_set(self, tiny_config, sphere_points):
        cfg = tiny_config.derive(train_count=100, test_count=100)
        assert select_training(cfg, sphere_points) is sphere_points

    def test_random_points(self, tiny_config, sphere_points):
        cfg = tiny_config.derive(train_kind=TrainKind.RANDOM)
        training = select_training(cfg, sphere_points)
        assert training.kind is PointSetKind.RANDOM
        assert len(training) == 20

    def test_own_quasi_uniform_set(self, tiny_config, sphere_points):
        cfg = tiny_config.derive(train_kind=TrainKind.QUASI_UNIFORM, train_count=60)
        training = select_training(cfg, sphere_points)
        assert training.kind is PointSetKind.QUASI_UNIFORM
        assert len(training) == 60
        assert (tiny_config.output_dir.parent / "points" / "sphere_quasi_uniform_60_0.csv").exists()


class TestRunExperiment:
    def test_writes_results(self, tiny_config):
        record = run_experiment(tiny_config)
        out = tiny_config.output_dir
        for name in ("config.json", "metrics.json", "timing.json", "runs.json",
                     "errors.csv", "best_params.npz"):
            assert (out / name).exists(), name
        assert (out.parent / "points" / "sphere_quasi_uniform_40_0.csv").exists()

        assert record.seeds == [0, 1]
        assert not record.failed
        assert record.mean_l2 == pytest.approx(np.mean(record.per_seed_l2))
        assert record.best_l2 == min(record.per_seed_l2)

        metrics = json.loads((out / "metrics.json").read_text())
        assert "wall_time" not in metrics
        assert "best_abs_errors" not in metrics
        assert metrics["mean_l2"] == record.mean_l2

        with open(out / "errors.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert ",".join(rows[0]) == ERRORS_HEADER
        assert len(rows) == 1 + tiny_config.test_count
        np.testing.assert_allclose([float(r[5]) for r in rows[1:]], record.best_abs_errors)

        runs = json.loads((out / "runs.json").read_text())
        assert [r["seed"] for r in runs] == [0, 1]

    def test_metrics_are_reproducible(self, tiny_config):
        run_experiment(tiny_config)
        first = (tiny_config.output_dir / "metrics.json").read_bytes()
        run_experiment(tiny_config)
        assert (tiny_config.output_dir / "metrics.json").read_bytes() == first

    def test_failed_seeds_are_flagged(self, tiny_config, mocker):
        mocker.patch("surfpinn.optim.minimize", side_effect=RuntimeError("diverged"))
        record = run_experiment(tiny_config)
        assert record.failed
        assert record.mean_l2 is None
        assert record.per_seed_l2 == [None, None]
        assert "diverged" in record.failure
        assert not (tiny_config.output_dir / "errors.csv").exists()
        assert check_experiment(record, tiny_config) == ["tiny: no seed produced a result"]

    def test_threshold_check(self, tiny_config):
        record = SimpleNamespace(name="tiny", mean_l2=0.5, best_l2=0.2)
        assert check_experiment(record, tiny_config.derive(max_mean_l2=1.0)) == []
        assert len(check_experiment(record, tiny_config.derive(max_mean_l2=0.1))) == 1

    def test_best_seed_threshold(self, tiny_config):
        record = SimpleNamespace(name="tiny", mean_l2=4e-3, best_l2=2e-3)
        cfg = tiny_config.derive(max_mean_l2=5e-3, max_best_l2=1e-3)
        assert check_experiment(record, cfg) == [
            "tiny: best-seed L2 error 2.000e-03 exceeds 1.000e-03"
        ]
        assert check_experiment(record, cfg.derive(max_best_l2=5e-3)) == []

    def test_sphere_config_carries_acceptance_thresholds(self):
        cfg = load_config(CONFIG_DIR / "sphere_example1.yaml")
        assert (cfg.max_mean_l2, cfg.max_best_l2) == (5e-3, 1e-3)
        record = SimpleNamespace(name=cfg.name, mean_l2=6e-3, best_l2=5e-4)
        assert len(check_experiment(record, cfg)) == 1


class TestConvergence:
    def test_fitted_slope(self):
        rows = [ConvergenceRow(n, 0.5 * n ** -1.5) for n in (100, 400, 1600)]
        result = fit_convergence(rows)
        assert result.slope == pytest.approx(-1.5)
        assert result.ratio == pytest.approx(64.0)
        assert result.fit_range == [100, 1600]
        assert rows[0].slope is None
        assert rows[1].slope == pytest.approx(-1.5)
        assert check_convergence(result) == []

    def test_fit_stops_at_smallest_error(self):
        rows = [ConvergenceRow(100, 1e-1), ConvergenceRow(1000, 1e-3), ConvergenceRow(2000, 2e-3)]
        result = fit_convergence(rows)
        assert result.slope == pytest.approx(-2.0)
        assert result.fit_range == [100, 1000]
        assert result.ratio == pytest.approx(50.0)

    def test_flat_errors_fail(self):
        result = fit_convergence([ConvergenceRow(100, 1e-2), ConvergenceRow(200, 1e-2)])
        assert len(check_convergence(result)) == 2

    def test_study_writes_tables(self, tiny_config, mocker):
        run = mocker.patch(
            "surfpinn.harness.run_experiment",
            side_effect=lambda cfg: fake_record(0.5 * cfg.train_count ** -2.0),
        )
        base = tiny_config.derive(test_count=400)
        result = convergence_study(base, [10, 40, 160])
        assert run.call_count == 3
        assert [c.args[0].output_dir.name for c in run.call_args_list] == ["N10", "N40", "N160"]
        assert result.slope == pytest.approx(-2.0)
        lines = (base.output_dir / "convergence.csv").read_text().splitlines()
        assert lines[0] == "N,mean_l2,slope"
        assert len(lines) == 4
        assert json.loads((base.output_dir / "convergence.json").read_text())["fit_range"] == [10, 160]

    def test_n_values_must_ascend(self, tiny_config):
        with pytest.raises(ExperimentError):
            convergence_study(tiny_config, [40, 20])


class TestStudies:
    def test_sweep(self, tiny_config, mocker):
        errors = iter([2e-3, 1e-3])
        mocker.patch("surfpinn.harness.run_experiment",
                     side_effect=lambda cfg: fake_record(next(errors)))
        rows = architecture_sweep(tiny_config, [[3, 20, 1], [3, 20, 20, 1]])
        assert [(r.width, r.depth) for r in rows] == [(20, 2), (20, 3)]
        assert (tiny_config.output_dir / "sweep.csv").read_text().splitlines()[1] == "3-20-1,20,2,0.002"
        assert check_sweep(rows) == []

    def test_sweep_spread(self):
        rows = [SweepRow([3, 1], 0, 1, 1e-1), SweepRow([3, 5, 1], 5, 2, 1e-3)]
        assert len(check_sweep(rows)) == 1

    def test_suite(self, tmp_path, mocker):
        run = mocker.patch("surfpinn.harness.run_experiment",
                           side_effect=lambda cfg: fake_record(2e-2))
        rows = manifold_suite([0], tmp_path / "suite", ExperimentConfig(optimizer={"max_iters": 1}))
        assert [r.manifold for r in rows] == list(SUITE_MANIFOLDS)
        configs = [c.args[0] for c in run.call_args_list]
        assert all(c.problem == "example2" and c.train_count == 500 for c in configs)
        assert [c.test_count for c in configs] == [3996, 3690, 4286, 4000]
        assert [r.passed for r in rows] == [False, False, True, True]
        assert check_suite(rows)[0] == "cdp: mean L2 error 0.02 exceeds 1.2e-02"
        assert (tmp_path / "suite" / "suite.md").read_text().startswith("| manifold")

    def test_suite_check(self):
        rows = [SuiteRow("cdp", 3996, 2e-2, 1.2e-2), SuiteRow("rbc", 4000, None, 2.4e-2)]
        assert len(check_suite(rows)) == 2

    def test_sampling_comparison(self, tmp_path, mocker):
        run = mocker.patch(
            "surfpinn.harness.run_experiment",
            side_effect=lambda cfg: fake_record(
                1e-3 if cfg.train_kind is TrainKind.QUASI_UNIFORM_SUBSET else 2e-3
            ),
        )
        result = sampling_comparison([0, 1], tmp_path / "sampling")
        assert run.call_count == 2
        assert all(c.args[0].surface == "torus" for c in run.call_args_list)
        assert result.ratio == pytest.approx(2.0)
        assert check_sampling(result) == []
        saved = json.loads((tmp_path / "sampling" / "comparison.json").read_text())
        assert saved["ratio"] == pytest.approx(2.0)

    def test_sampling_comparison_with_own_quasi_uniform_set(self, tmp_path, mocker):
        run = mocker.patch("surfpinn.harness.run_experiment", return_value=fake_record(1e-3))
        sampling_comparison([0], tmp_path / "sampling", quasi_kind=TrainKind.QUASI_UNIFORM)
        kinds = [c.args[0].train_kind for c in run.call_args_list]
        assert kinds == [TrainKind.QUASI_UNIFORM, TrainKind.RANDOM]
        saved = json.loads((tmp_path / "sampling" / "comparison.json").read_text())
        assert saved["quasi_kind"] == "quasi_uniform"

    def test_sampling_comparison_needs_a_quasi_uniform_arm(self, tmp_path):
        with pytest.raises(ExperimentError):
            sampling_comparison([0], tmp_path, quasi_kind=TrainKind.RANDOM)

    def test_sampling_check_fails_on_large_gap(self):
        assert len(check_sampling(SamplingComparison(1e-3, 5e-3))) == 1
        assert len(check_sampling(SamplingComparison(None, 5e-3))) == 1


@pytest.mark.slow
class TestAcceptance:
    def test_sphere_example1_single_seed(self, tmp_path):
        record = run_experiment(ExperimentConfig(seeds=[0], output_dir=tmp_path / "sphere"))
        assert record.final_losses[0] < 1e-5

    def test_sphere_example1_ten_seeds(self, tmp_path):
        record = run_experiment(ExperimentConfig(output_dir=tmp_path / "sphere"))
        assert record.mean_l2 <= 5e-3
        assert record.best_l2 <= 1e-3

    def test_convergence_trend(self, tmp_path):
        base = ExperimentConfig(output_dir=tmp_path / "convergence")
        result = convergence_study(base, [10, 100, 500, 1500, 2500])
        assert check_convergence(result) == []

    def test_width_insensitivity(self, tmp_path):
        base = ExperimentConfig(output_dir=tmp_path / "sweep")
        rows = architecture_sweep(base, [[3, w, w, w, 1] for w in (20, 50, 100)])
        assert check_sweep(rows) == []

    def test_suite_thresholds(self, tmp_path):
        rows = manifold_suite(range(10), tmp_path / "suite")
        assert check_suite(rows) == []

    def test_sampling_kinds_agree(self, tmp_path):
        assert check_sampling(sampling_comparison(range(10), tmp_path / "sampling")) == []
