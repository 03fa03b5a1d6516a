"""Point generators: random and minimum-energy sets, subsets and chart grids."""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from ..exceptions import ProjectionFailed, SamplingError, SubsetTooLarge
from ..geometry import (
    LevelSetSurface,
    ParametricSurface,
    get_surface,
    normal_at,
    parametric_point,
    surface_frame,
)
from ..geometry.levelset import DEGENERATE_TOL
from ..geometry.parametric import CHART_TOL
from .pointset import PointSet, PointSetKind

logger = logging.getLogger(__name__)

PROJECTION_TOL = 1e-10
PROJECTION_STEPS = 50

# Grid nodes on a degenerate chart value move this fraction of a grid step inward.
GRID_NUDGE = 1e-3
GRID_MATCH_TOL = 1e-12


class SamplingConfig(BaseModel):
    """Knobs for point generation; echoed into experiment metadata."""

    me_iters: int = Field(200, ge=1, description="Minimum-energy repulsion sweeps")
    neighbors: int = Field(12, ge=1, description="Nearest neighbours in the repulsion force")
    riesz_s: float = Field(2.0, gt=0.0, description="Riesz energy exponent")
    step: float = Field(0.05, gt=0.0, description="Step scale relative to h^(s+2)")
    band: float = Field(
        0.02, gt=0.0, description="Candidate band half-width as a fraction of the box size"
    )
    grid_shapes: Dict[str, Tuple[int, int]] = Field(
        default_factory=lambda: {"rbc": (100, 40)},
        description="(n_lam, n_theta) per parametric surface",
    )


def project_to_surface(
    surface: LevelSetSurface,
    points: np.ndarray,
    tol: float = PROJECTION_TOL,
    max_steps: int = PROJECTION_STEPS,
) -> np.ndarray:
    """Move points onto S = 0 by Newton steps along grad S.

    Each step is p <- p - S(p) grad S(p) / |grad S(p)|^2, halved while it
    increases |S|.

    Raises:
        ProjectionFailed: If some point has |S| >= tol after ``max_steps``
    """
    p = np.array(points, dtype=float, copy=True)
    for _ in range(max_steps):
        value = surface.value(p)
        active = np.abs(value) >= tol
        if not np.any(active):
            return _polish(surface, p, value)
        q = p[active]
        s_q = value[active]
        grad = surface.gradient(q)
        step = (s_q / np.sum(grad * grad, axis=-1))[:, None] * grad
        trial = q - step
        for _ in range(10):
            worse = np.abs(surface.value(trial)) > np.abs(s_q)
            if not np.any(worse):
                break
            step[worse] *= 0.5
            trial = q - step
        p[active] = trial
    residual = np.abs(surface.value(p))
    if np.any(residual >= tol):
        raise ProjectionFailed(
            f"{surface.name}: {int(np.sum(residual >= tol))} point(s) still have "
            f"|S| >= {tol:g} after {max_steps} Newton steps (max |S| = {residual.max():.3e})"
        )
    return p


def _polish(surface: LevelSetSurface, p: np.ndarray, value: np.ndarray) -> np.ndarray:
    """One more full Newton step, kept only where it does not increase |S|."""
    grad = surface.gradient(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        trial = p - (value / np.sum(grad * grad, axis=-1))[:, None] * grad
        better = np.abs(surface.value(trial)) <= np.abs(value)
    return np.where(better[:, None], trial, p)


def _near_surface(
    surface: LevelSetSurface, count: int, rng: np.random.Generator, band: float
) -> np.ndarray:
    """Rejection-sample box points whose estimated distance |S|/|grad S| < band."""
    lo, hi = (np.asarray(b, dtype=float) for b in surface.bounding_box)
    width = band * float(np.max(hi - lo))
    accepted = []
    total = 0
    while total < count:
        batch = rng.uniform(lo, hi, size=(max(4 * count, 1024), 3))
        with np.errstate(divide="ignore", invalid="ignore"):
            estimate = np.abs(surface.value(batch)) / np.linalg.norm(
                surface.gradient(batch), axis=-1
            )
        keep = batch[np.isfinite(estimate) & (estimate < width)]
        accepted.append(keep)
        total += len(keep)
    return np.concatenate(accepted)[:count]


def _on_surface(
    surface: LevelSetSurface, count: int, rng: np.random.Generator, band: float
) -> np.ndarray:
    """Projected points with a well-defined normal; degenerate ones are redrawn."""
    kept = np.empty((0, 3))
    while len(kept) < count:
        projected = project_to_surface(
            surface, _near_surface(surface, count - len(kept), rng, band)
        )
        good = np.linalg.norm(surface.gradient(projected), axis=-1) > DEGENERATE_TOL
        kept = np.concatenate([kept, projected[good]])
    return kept


def random_surface_points(
    surface: LevelSetSurface, count: int, seed: int, band: float = 0.02
) -> PointSet:
    """Seeded random points on a level set (rejection sampling + projection).

    Raises:
        ProjectionFailed: If projection does not converge
    """
    if count < 1:
        raise SamplingError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    positions = _on_surface(surface, count, rng, band)
    return PointSet(
        points=surface_frame(surface, positions),
        surface_name=surface.name,
        seed=seed,
        kind=PointSetKind.RANDOM,
    )


def riesz_energy(positions: np.ndarray, s: float = 2.0) -> float:
    """Full-pair Riesz s-energy, sum over i < j of |x_i - x_j|^(-s)."""
    return float(np.sum(pdist(positions) ** (-s)))


def minimum_energy_points(
    surface: LevelSetSurface,
    count: int,
    seed: int,
    iters: int,
    config: Optional[SamplingConfig] = None,
) -> PointSet:
    """Quasi-uniform points by Riesz repulsion constrained to the surface.

    Starts from :func:`random_surface_points` with the same seed. Each sweep
    moves every point along the tangential part of the repulsion force from
    its nearest neighbours, re-projects onto S = 0 and keeps the sweep only
    if the full-pair energy did not increase (the step is halved otherwise).

    Args:
        surface: Level-set surface
        count: Number of points (at least 2)
        seed: Generation seed
        iters: Number of repulsion sweeps
        config: Sampling knobs (defaults when omitted)

    Returns:
        A quasi-uniform PointSet with its energy history

    Raises:
        ProjectionFailed: If re-projection does not converge
    """
    if count < 2:
        raise SamplingError(f"minimum-energy sets need at least 2 points, got {count}")
    config = config or SamplingConfig()
    s = config.riesz_s
    k = min(config.neighbors, count - 1)

    positions = random_surface_points(surface, count, seed, band=config.band).positions
    energy = riesz_energy(positions, s)
    history = [energy]

    for sweep in range(iters):
        dist, idx = cKDTree(positions).query(positions, k=k + 1)
        dist, idx = dist[:, 1:], idx[:, 1:]
        diff = positions[:, None, :] - positions[idx]
        force = np.sum(s * diff / dist[..., None] ** (s + 2), axis=1)
        normal = normal_at(surface, positions)
        tangential = force - np.sum(force * normal, axis=-1)[:, None] * normal

        h = float(np.median(dist[:, 0]))
        move = config.step * h ** (s + 2) * tangential
        length = np.linalg.norm(move, axis=-1)
        cap = 0.25 * h
        move *= np.minimum(1.0, cap / np.maximum(length, np.finfo(float).tiny))[:, None]

        for _ in range(8):
            trial = project_to_surface(surface, positions + move)
            trial_energy = riesz_energy(trial, s)
            if trial_energy <= energy:
                positions, energy = trial, trial_energy
                break
            move *= 0.5
        else:
            logger.debug(f"{surface.name}: sweep {sweep} found no energy decrease")
        history.append(energy)

    logger.debug(
        f"{surface.name}: ME energy {history[0]:.6e} -> {history[-1]:.6e} over {iters} sweeps"
    )
    return PointSet(
        points=surface_frame(surface, positions),
        surface_name=surface.name,
        seed=seed,
        kind=PointSetKind.QUASI_UNIFORM,
        energy_history=history,
    )


def separation_fill_ratio(
    point_set: PointSet, surface: LevelSetSurface, probes: int = 20000, seed: int = 7919
) -> float:
    """Minimum pairwise distance divided by the estimated covering radius.

    The covering radius is the largest distance from a random probe point on
    the surface to its nearest member of ``point_set``.
    """
    positions = point_set.positions
    separation = float(np.min(pdist(positions)))
    probe = random_surface_points(surface, probes, seed).positions
    covering = float(np.max(cKDTree(positions).query(probe)[0]))
    return separation / covering


def random_subset(parent: PointSet, n: int, seed: int) -> PointSet:
    """Uniform n-subset of ``parent`` without replacement.

    Raises:
        SubsetTooLarge: If n exceeds the parent size
    """
    if n > len(parent):
        raise SubsetTooLarge(f"Cannot draw {n} points from a set of {len(parent)}")
    if n < 1:
        raise SamplingError(f"Subset size must be positive, got {n}")
    indices = np.random.default_rng(seed).choice(len(parent), size=n, replace=False)
    return PointSet(
        points=parent.points[indices],
        surface_name=parent.surface_name,
        seed=seed,
        kind=PointSetKind.RANDOM_SUBSET,
        parent_indices=indices,
    )


def _inward(value: float, low: float, high: float) -> float:
    return 1.0 if value <= 0.5 * (low + high) else -1.0


def _avoid_degenerate(
    surface: ParametricSurface, lam: np.ndarray, theta: np.ndarray, steps: Tuple[float, float]
) -> Tuple[np.ndarray, np.ndarray]:
    """Move nodes sitting on a degenerate parameter value a fraction of a step inward.

    The theta coordinate moves when the degenerate value fixes theta, otherwise lambda.
    """
    (l0, l1), (t0, t1) = surface.domain
    lam, theta = lam.copy(), theta.copy()
    for lam_bad, theta_bad in surface.degenerate_values:
        hit = np.ones(lam.shape, dtype=bool)
        if lam_bad is not None:
            hit &= np.isclose(lam, lam_bad, rtol=0.0, atol=GRID_MATCH_TOL)
        if theta_bad is not None:
            hit &= np.isclose(theta, theta_bad, rtol=0.0, atol=GRID_MATCH_TOL)
        if not np.any(hit):
            continue
        if theta_bad is not None:
            theta[hit] += GRID_NUDGE * steps[1] * _inward(theta_bad, t0, t1)
        elif lam_bad is not None:
            lam[hit] += GRID_NUDGE * steps[0] * _inward(lam_bad, l0, l1)
        logger.debug(f"{surface.name}: moved {int(hit.sum())} grid nodes off "
                     f"degenerate value ({lam_bad}, {theta_bad})")
    return lam, theta


def parametric_grid(surface: ParametricSurface, n_lam: int, n_theta: int) -> PointSet:
    """Tensor grid of ``n_lam * n_theta`` nodes over the chart domain, endpoints included.

    Nodes that land on one of ``surface.degenerate_values`` are moved inward
    by ``GRID_NUDGE`` of a grid step, so every node has a tangent plane and
    the grid keeps its full size.
    """
    if n_lam < 2 or n_theta < 2:
        raise SamplingError(f"Grid needs at least 2 x 2 nodes, got {n_lam} x {n_theta}")
    (l0, l1), (t0, t1) = surface.domain
    lam, theta = np.meshgrid(
        np.linspace(l0, l1, n_lam), np.linspace(t0, t1, n_theta), indexing="ij"
    )
    steps = ((l1 - l0) / (n_lam - 1), (t1 - t0) / (n_theta - 1))
    lam, theta = _avoid_degenerate(surface, lam.ravel(), theta.ravel(), steps)
    return PointSet(
        points=parametric_point(surface, lam, theta),
        surface_name=surface.name,
        seed=0,
        kind=PointSetKind.PARAMETRIC_GRID,
    )


def random_parametric_points(surface: ParametricSurface, count: int, seed: int) -> PointSet:
    """Seeded uniform parameter draws mapped through the chart.

    Draws whose chart is degenerate are discarded and redrawn.
    """
    if count < 1:
        raise SamplingError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    lam_kept, theta_kept = np.empty(0), np.empty(0)
    while len(lam_kept) < count:
        lam, theta = surface.random_parameters(count - len(lam_kept), rng)
        r_l, r_t = surface.first_partials(lam, theta)
        good = np.linalg.norm(np.cross(r_l, r_t), axis=-1) > CHART_TOL
        lam_kept = np.concatenate([lam_kept, lam[good]])
        theta_kept = np.concatenate([theta_kept, theta[good]])
    return PointSet(
        points=parametric_point(surface, lam_kept, theta_kept),
        surface_name=surface.name,
        seed=seed,
        kind=PointSetKind.RANDOM,
    )


def quasi_uniform_points(
    surface_name: str, count: int, seed: int, config: Optional[SamplingConfig] = None
) -> PointSet:
    """Quasi-uniform test points for any registered surface.

    Level sets use minimum-energy points; parametric surfaces use the grid
    shape configured for them, which must multiply out to ``count``.
    """
    config = config or SamplingConfig()
    surface = get_surface(surface_name)
    if isinstance(surface, LevelSetSurface):
        return minimum_energy_points(surface, count, seed, config.me_iters, config)
    shape = config.grid_shapes.get(surface.name)
    if shape is None or shape[0] * shape[1] != count:
        raise SamplingError(
            f"{surface.name}: no grid shape configured for {count} points "
            f"(configured: {shape})"
        )
    return parametric_grid(surface, *shape)


def random_points(surface_name: str, count: int, seed: int) -> PointSet:
    """Random points for any registered surface."""
    surface = get_surface(surface_name)
    if isinstance(surface, LevelSetSurface):
        return random_surface_points(surface, count, seed)
    return random_parametric_points(surface, count, seed)


def load_or_generate(
    surface_name: str,
    count: int,
    seed: int,
    cache_dir: Optional[Union[str, Path]] = None,
    config: Optional[SamplingConfig] = None,
) -> PointSet:
    """Quasi-uniform points, read from ``cache_dir`` when already generated."""
    if cache_dir is not None:
        path = Path(cache_dir) / cache_filename(surface_name, count, seed)
        if path.exists():
            logger.info(f"Loading cached points from {path}")
            return PointSet.load_csv(path)
    points = quasi_uniform_points(surface_name, count, seed, config)
    if cache_dir is not None:
        points.save_csv(cache_dir)
    return points


def cache_filename(surface_name: str, count: int, seed: int) -> str:
    """Filename under which quasi-uniform points for these arguments are cached."""
    if isinstance(get_surface(surface_name), LevelSetSurface):
        return f"{surface_name}_{PointSetKind.QUASI_UNIFORM.value}_{count}_{seed}.csv"
    return f"{surface_name}_{PointSetKind.PARAMETRIC_GRID.value}_{count}_0.csv"


__all__ = [
    "SamplingConfig",
    "project_to_surface",
    "random_surface_points",
    "riesz_energy",
    "separation_fill_ratio",
    "minimum_energy_points",
    "random_subset",
    "parametric_grid",
    "random_parametric_points",
    "quasi_uniform_points",
    "random_points",
    "load_or_generate",
    "cache_filename",
]
