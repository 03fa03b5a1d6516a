"""Tests for surfaces, normals, projectors and curvature terms."""
import numpy as np
import pytest

from surfpinn.exceptions import DegenerateChart, DegenerateGradient, UnknownSurface
from surfpinn.geometry import (
    SphereChart,
    available_surfaces,
    curvature_term,
    get_surface,
    is_level_set,
    normal_at,
    parametric_point,
    projection_matrix,
    surface_frame,
)
from surfpinn.oracles import fd_gradient, fd_hessian, fd_normal_divergence, relative_error
from surfpinn.sampling import parametric_grid, random_surface_points

LEVEL_SETS = ["sphere", "torus", "cdp", "bretzel2", "orthocircle"]


def test_registry_contains_every_surface():
    assert set(LEVEL_SETS + ["rbc"]) <= set(available_surfaces())


def test_unknown_surface_lists_alternatives():
    with pytest.raises(UnknownSurface, match="torus"):
        get_surface("klein_bottle")


def test_is_level_set():
    assert is_level_set("torus")
    assert not is_level_set("rbc")


@pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
def test_sphere_curvature_is_two_over_radius(radius):
    sphere = get_surface("sphere", radius=radius)
    points = random_surface_points(sphere, 200, seed=3)
    np.testing.assert_allclose(points.points.mean_curv_sum, 2.0 / radius, atol=1e-8)


def test_torus_equator_curvatures(torus):
    assert curvature_term(torus, np.array([4.0 / 3.0, 0.0, 0.0])) == pytest.approx(3.75, abs=1e-6)
    assert curvature_term(torus, np.array([2.0 / 3.0, 0.0, 0.0])) == pytest.approx(1.5, abs=1e-6)


def test_sphere_normal_is_position(sphere):
    p = np.array([0.0, 0.6, 0.8])
    np.testing.assert_allclose(normal_at(sphere, p), p, atol=1e-15)


@pytest.mark.parametrize("name", LEVEL_SETS)
def test_projector_is_symmetric_and_idempotent(name):
    points = random_surface_points(get_surface(name), 1000, seed=11).points
    proj = projection_matrix(points.normal)
    np.testing.assert_allclose(proj @ proj, proj, atol=1e-13)
    np.testing.assert_array_equal(proj, np.swapaxes(proj, -1, -2))
    np.testing.assert_allclose(np.einsum("nij,nj->ni", proj, points.normal), 0.0, atol=1e-13)
    np.testing.assert_allclose(np.linalg.norm(points.normal, axis=-1), 1.0, atol=1e-14)


@pytest.mark.parametrize("name", LEVEL_SETS)
def test_level_set_derivatives_match_finite_differences(name):
    surface = get_surface(name)
    x = random_surface_points(surface, 20, seed=5).positions
    assert relative_error(surface.gradient(x), fd_gradient(surface.value, x, h=1e-6)) < 1e-6
    assert relative_error(surface.hessian(x), fd_hessian(surface.gradient, x, h=1e-6)) < 1e-6
    hess = surface.hessian(x)
    np.testing.assert_array_equal(hess, np.swapaxes(hess, -1, -2))


@pytest.mark.parametrize("name", LEVEL_SETS)
def test_curvature_matches_divergence_of_normal(name):
    surface = get_surface(name)
    frame = random_surface_points(surface, 20, seed=8).points
    brute = fd_normal_divergence(surface, frame.position)
    assert relative_error(frame.mean_curv_sum, brute) < 1e-5


def test_degenerate_gradient_is_reported(sphere):
    with pytest.raises(DegenerateGradient):
        normal_at(sphere, np.zeros(3))
    with pytest.raises(DegenerateGradient, match="index 1"):
        surface_frame(sphere, np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))


def test_sphere_chart_curvature_and_orientation():
    lam = np.linspace(-3.0, 3.0, 7)
    theta = np.linspace(-1.2, 1.2, 7)
    pt = parametric_point(SphereChart(), lam, theta)
    np.testing.assert_allclose(pt.mean_curv_sum, 2.0, atol=1e-12)
    np.testing.assert_allclose(pt.normal, pt.position, atol=1e-12)


def test_rbc_fold_is_degenerate():
    with pytest.raises(DegenerateChart):
        parametric_point(get_surface("rbc"), np.array([0.3]), np.array([0.0]))


def test_rbc_grid_normals_face_outward():
    grid = parametric_grid(get_surface("rbc"), 100, 40)
    assert len(grid) == 4000
    points = grid.points
    np.testing.assert_allclose(np.linalg.norm(points.normal, axis=-1), 1.0, atol=1e-12)
    assert np.all(np.sum(points.normal * points.position, axis=-1) >= 0.0)
    assert np.all(np.isfinite(points.mean_curv_sum))


def test_rbc_chart_values():
    rbc = get_surface("rbc")
    np.testing.assert_allclose(rbc.chart(0.0, 0.0), [1.15, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(rbc.chart(np.pi / 2, 0.0), [0.0, 1.15, 0.62], atol=1e-15)


def test_rbc_chart_covers_the_surface_twice(rng):
    rbc = get_surface("rbc")
    lam, theta = rng.uniform(-np.pi, np.pi, 10), rng.uniform(-1.5, 1.5, 10)
    np.testing.assert_allclose(rbc.chart(lam, theta), rbc.chart(lam, -theta), atol=1e-15)
    grid = parametric_grid(rbc, 100, 40).positions.reshape(100, 40, 3)
    np.testing.assert_allclose(grid, grid[:, ::-1], atol=1e-12)
    np.testing.assert_allclose(grid[0], grid[-1], atol=1e-12)


@pytest.mark.parametrize("chart", [get_surface("rbc"), SphereChart()], ids=lambda c: c.name)
def test_chart_partials_match_finite_differences(chart, rng):
    lam = rng.uniform(-np.pi, np.pi, 25)
    theta = rng.uniform(-1.4, 1.4, 25)
    h = 1e-6
    r_l, r_t = chart.first_partials(lam, theta)
    fd_l = (chart.chart(lam + h, theta) - chart.chart(lam - h, theta)) / (2 * h)
    fd_t = (chart.chart(lam, theta + h) - chart.chart(lam, theta - h)) / (2 * h)
    assert relative_error(r_l, fd_l) < 1e-8
    assert relative_error(r_t, fd_t) < 1e-8

    r_ll, r_lt, r_tt = chart.second_partials(lam, theta)
    d_l = [(a - b) / (2 * h) for a, b in zip(chart.first_partials(lam + h, theta),
                                             chart.first_partials(lam - h, theta))]
    d_t = [(a - b) / (2 * h) for a, b in zip(chart.first_partials(lam, theta + h),
                                             chart.first_partials(lam, theta - h))]
    assert relative_error(r_ll, d_l[0]) < 1e-8
    assert relative_error(r_lt, d_t[0]) < 1e-8
    assert relative_error(r_tt, d_t[1]) < 1e-8


class TestParametricGrid:
    def test_sphere_chart_grid_through_poles(self):
        grid = parametric_grid(SphereChart(), 4, 2)
        assert len(grid) == 8
        points = grid.points
        np.testing.assert_allclose(np.linalg.norm(points.position, axis=-1), 1.0, atol=1e-14)
        np.testing.assert_allclose(points.normal, points.position, atol=1e-10)
        np.testing.assert_allclose(points.mean_curv_sum, 2.0, atol=1e-6)

    def test_rbc_corners_match_chart(self):
        rbc = get_surface("rbc")
        grid = parametric_grid(rbc, 2, 2)
        lam, theta = np.meshgrid([-np.pi, np.pi], [-np.pi / 2, np.pi / 2], indexing="ij")
        np.testing.assert_allclose(grid.positions, rbc.chart(lam.ravel(), theta.ravel()),
                                   atol=1e-15)

    @pytest.mark.parametrize("shape", [(100, 41), (5, 3)])
    def test_rbc_grid_steps_around_degenerate_values(self, shape):
        rbc = get_surface("rbc")
        grid = parametric_grid(rbc, *shape)
        assert len(grid) == shape[0] * shape[1]
        assert np.all(np.isfinite(grid.points.mean_curv_sum))
        assert np.all(np.sum(grid.points.normal * grid.positions, axis=-1) >= 0.0)

    def test_untouched_grid_is_the_plain_tensor_grid(self):
        rbc = get_surface("rbc")
        grid = parametric_grid(rbc, 100, 40)
        lam, theta = np.meshgrid(np.linspace(-np.pi, np.pi, 100),
                                 np.linspace(-np.pi / 2, np.pi / 2, 40), indexing="ij")
        np.testing.assert_array_equal(grid.positions, rbc.chart(lam.ravel(), theta.ravel()))
