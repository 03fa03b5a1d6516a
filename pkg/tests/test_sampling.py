"""Tests for point generation and point-set persistence."""
import numpy as np
import pytest
from scipy.spatial.distance import pdist

from surfpinn.exceptions import PointSetFormatError, SamplingError, SubsetTooLarge
from surfpinn.sampling import (
    CSV_HEADER,
    PointSet,
    PointSetKind,
    SamplingConfig,
    generators,
    load_or_generate,
    minimum_energy_points,
    quasi_uniform_points,
    random_points,
    random_subset,
    random_surface_points,
    riesz_energy,
    separation_fill_ratio,
)


class TestRandomPoints:
    def test_points_lie_on_surface(self, torus):
        points = random_surface_points(torus, 300, seed=4)
        assert len(points) == 300
        assert points.kind is PointSetKind.RANDOM
        assert np.max(np.abs(torus.value(points.positions))) < 1e-10

    def test_seeded(self, torus):
        a = random_surface_points(torus, 50, seed=9)
        b = random_surface_points(torus, 50, seed=9)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_rbc_random_points(self):
        points = random_points("rbc", 50, seed=1)
        assert len(points) == 50
        assert points.kind is PointSetKind.RANDOM

    def test_nonpositive_count(self, sphere):
        with pytest.raises(SamplingError):
            random_surface_points(sphere, 0, seed=0)

    def test_sphere_points_are_balanced(self, sphere):
        points = random_surface_points(sphere, 1000, seed=0)
        assert np.linalg.norm(points.positions.mean(axis=0)) < 0.1


class TestMinimumEnergy:
    def test_energy_never_increases(self, sphere):
        points = minimum_energy_points(sphere, 60, seed=0, iters=30)
        history = points.energy_history
        assert len(history) == 31
        assert all(b <= a for a, b in zip(history, history[1:]))
        assert history[-1] < history[0]
        assert riesz_energy(points.positions) == pytest.approx(history[-1], rel=1e-12)

    def test_points_stay_on_surface(self, torus):
        points = minimum_energy_points(torus, 80, seed=1, iters=20)
        assert points.kind is PointSetKind.QUASI_UNIFORM
        assert np.max(np.abs(torus.value(points.positions))) < 1e-10

    def test_more_uniform_than_random(self, sphere):
        quasi = minimum_energy_points(sphere, 80, seed=2, iters=100)
        rough = random_surface_points(sphere, 80, seed=2)
        assert separation_fill_ratio(quasi, sphere, probes=5000) > separation_fill_ratio(
            rough, sphere, probes=5000
        )

    def test_deterministic(self, sphere):
        a = minimum_energy_points(sphere, 30, seed=5, iters=10)
        b = minimum_energy_points(sphere, 30, seed=5, iters=10)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_two_points_end_antipodal(self, sphere):
        a, b = minimum_energy_points(sphere, 2, seed=0, iters=200).positions
        angle = np.arccos(np.clip(np.dot(a, b), -1.0, 1.0))
        assert angle == pytest.approx(np.pi, abs=1e-3)

    def test_separation_grows_from_random_start(self, sphere, sphere_points):
        start = random_surface_points(sphere, len(sphere_points), seed=sphere_points.seed)
        assert np.min(pdist(sphere_points.positions)) > np.min(pdist(start.positions))

    @pytest.mark.slow
    def test_sphere_2500_separation_fill_ratio(self, sphere):
        points = quasi_uniform_points("sphere", 2500, seed=0)
        assert separation_fill_ratio(points, sphere) >= 0.5


class TestSubsets:
    def test_subset_draws_from_parent(self, sphere_points):
        subset = random_subset(sphere_points, 25, seed=3)
        assert len(subset) == 25
        assert len(set(subset.parent_indices.tolist())) == 25
        np.testing.assert_array_equal(
            subset.positions, sphere_points.positions[subset.parent_indices]
        )

    def test_full_size_subset_is_a_permutation(self, sphere_points):
        subset = random_subset(sphere_points, len(sphere_points), seed=0)
        assert sorted(subset.parent_indices.tolist()) == list(range(len(sphere_points)))

    def test_too_large(self, sphere_points):
        with pytest.raises(SubsetTooLarge):
            random_subset(sphere_points, len(sphere_points) + 1, seed=0)


class TestQuasiUniform:
    def test_rbc_uses_configured_grid(self):
        points = quasi_uniform_points("rbc", 4000, seed=0)
        assert len(points) == 4000
        assert points.kind is PointSetKind.PARAMETRIC_GRID

    def test_rbc_rejects_unconfigured_count(self):
        with pytest.raises(SamplingError, match="grid shape"):
            quasi_uniform_points("rbc", 500, seed=0)

    def test_cache_is_reused(self, tmp_path, mocker):
        spy = mocker.spy(generators, "quasi_uniform_points")
        config = SamplingConfig(me_iters=3)
        first = load_or_generate("sphere", 20, 0, tmp_path, config)
        second = load_or_generate("sphere", 20, 0, tmp_path, config)
        assert spy.call_count == 1
        assert (tmp_path / "sphere_quasi_uniform_20_0.csv").exists()
        np.testing.assert_array_equal(first.positions, second.positions)


class TestCsv:
    def test_save_and_load(self, tmp_path, torus_points):
        path = torus_points.save_csv(tmp_path)
        assert path.name == "torus_random_40_2.csv"
        assert path.read_text().splitlines()[0] == CSV_HEADER
        loaded = PointSet.load_csv(path)
        assert loaded.kind is PointSetKind.RANDOM
        assert loaded.seed == 2
        assert loaded.surface_name == "torus"
        np.testing.assert_array_equal(loaded.positions, torus_points.positions)
        np.testing.assert_array_equal(loaded.points.mean_curv_sum, torus_points.points.mean_curv_sum)

    def test_bad_filename(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text(CSV_HEADER + "\n")
        with pytest.raises(PointSetFormatError, match="filename"):
            PointSet.load_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "sphere_random_1_0.csv"
        path.write_text("x,y,z\n1,0,0\n")
        with pytest.raises(PointSetFormatError, match="header"):
            PointSet.load_csv(path)
