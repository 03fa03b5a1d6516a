"""Finite-difference and closed-form checks for derivatives and operators.

:func:`run_derivative_checks` bundles them into named pass/fail records; the
``check-derivatives`` command prints those records.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional

import numpy as np
from dataclasses_json import dataclass_json

from .geometry import LevelSetSurface, get_surface, normal_at, surface_frame
from .net import architecture, forward, forward_jet, xavier_init
from .pde import (
    AnalyticField,
    PdeProblem,
    loss,
    loss_and_gradient,
    manufactured_problem,
    residual,
    surface_gradient,
    surface_laplacian,
    trig_product,
)
from .sampling import PointSet, SamplingConfig, minimum_energy_points, random_surface_points

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray], np.ndarray]


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    """max |actual - expected| / max(max |expected|, 1e-300)."""
    actual, expected = np.asarray(actual, dtype=float), np.asarray(expected, dtype=float)
    scale = max(float(np.max(np.abs(expected))), 1e-300)
    return float(np.max(np.abs(actual - expected))) / scale


def fd_gradient(fn: ScalarField, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a batched scalar field at ``x`` (N, 3)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[:, i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


def fd_hessian(gradient: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = 1e-5):
    """Central differences of a batched gradient field, symmetrized."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (3,))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[:, i, :] = (gradient(x + e) - gradient(x - e)) / (2 * h)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def fd_param_gradient(
    objective: Callable[[np.ndarray], float],
    flat: np.ndarray,
    h: float = 1e-6,
    indices: Optional[Iterable[int]] = None,
) -> np.ndarray:
    """Central-difference gradient of ``objective`` at ``flat``.

    Only ``indices`` are differentiated when given; other entries are zero.
    """
    flat = np.asarray(flat, dtype=float)
    out = np.zeros_like(flat)
    for i in range(flat.size) if indices is None else indices:
        step = np.zeros_like(flat)
        step[i] = h
        out[i] = (objective(flat + step) - objective(flat - step)) / (2 * h)
    return out


def fd_normal_divergence(surface: LevelSetSurface, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """H_S as the divergence of the normalized gradient, by central differences."""
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[0])
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        total += (normal_at(surface, x + e)[:, i] - normal_at(surface, x - e)[:, i]) / (2 * h)
    return total


def unit_sphere_gradient(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Surface gradient on the unit sphere, (I - x x^T) grad u."""
    projector = np.eye(3) - x[:, :, None] * x[:, None, :]
    return np.einsum("nij,nj->ni", projector, grad)


def unit_sphere_laplacian(grad: np.ndarray, hess: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Laplace-Beltrami on the unit sphere written out in Cartesian components."""
    px, py, pz = x[:, 0], x[:, 1], x[:, 2]
    return (
        (1 - px**2) * hess[:, 0, 0]
        + (1 - py**2) * hess[:, 1, 1]
        + (1 - pz**2) * hess[:, 2, 2]
        - 2 * px * py * hess[:, 0, 1]
        - 2 * px * pz * hess[:, 0, 2]
        - 2 * py * pz * hess[:, 1, 2]
        - 2 * (px * grad[:, 0] + py * grad[:, 1] + pz * grad[:, 2])
    )


def _zeros(x: np.ndarray) -> np.ndarray:
    return np.zeros(x.shape[:-1])


def _diag_hess(entries: Callable[[np.ndarray], List[np.ndarray]]) -> ScalarField:
    def hess(x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[:-1] + (3, 3))
        for i, d in enumerate(entries(x)):
            out[..., i, i] = d
        return out
    return hess


def _xyz_hess(x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[:-1] + (3, 3))
    for i, j, k in ((0, 1, 2), (0, 2, 1), (1, 2, 0)):
        out[..., i, j] = out[..., j, i] = x[..., k]
    return out


def sphere_test_fields() -> List[AnalyticField]:
    """x, z^2, sin x sin y sin z, x y z and exp(x)."""
    return [
        AnalyticField(
            "x",
            lambda x: x[..., 0],
            lambda x: np.stack([np.ones_like(x[..., 0]), _zeros(x), _zeros(x)], axis=-1),
            _diag_hess(lambda x: [_zeros(x), _zeros(x), _zeros(x)]),
        ),
        AnalyticField(
            "z^2",
            lambda x: x[..., 2] ** 2,
            lambda x: np.stack([_zeros(x), _zeros(x), 2 * x[..., 2]], axis=-1),
            _diag_hess(lambda x: [_zeros(x), _zeros(x), np.full(x.shape[:-1], 2.0)]),
        ),
        trig_product(("sin", "sin", "sin")),
        AnalyticField(
            "xyz",
            lambda x: x[..., 0] * x[..., 1] * x[..., 2],
            lambda x: np.stack(
                [x[..., 1] * x[..., 2], x[..., 0] * x[..., 2], x[..., 0] * x[..., 1]], axis=-1
            ),
            _xyz_hess,
        ),
        AnalyticField(
            "exp(x)",
            lambda x: np.exp(x[..., 0]),
            lambda x: np.stack([np.exp(x[..., 0]), _zeros(x), _zeros(x)], axis=-1),
            _diag_hess(lambda x: [np.exp(x[..., 0]), _zeros(x), _zeros(x)]),
        ),
    ]


@dataclass_json
@dataclass
class CheckRecord:
    """Outcome of one derivative or operator check."""

    name: str
    error: float
    tolerance: float
    passed: bool


def _record(name: str, error: float, tolerance: float) -> CheckRecord:
    passed = bool(error < tolerance)
    log = logger.info if passed else logger.warning
    log(f"{name}: error {error:.3e} (tolerance {tolerance:.0e}) {'ok' if passed else 'FAILED'}")
    return CheckRecord(name, float(error), tolerance, passed)


def check_network_jet(seed: int = 0, count: int = 10) -> List[CheckRecord]:
    """forward_jet gradient and Hessian against central differences."""
    params = xavier_init(architecture(20, 3), seed)
    x = random_surface_points(get_surface("sphere"), count, seed).positions
    jet = forward_jet(params, x)
    grad_fd = fd_gradient(lambda p: forward(params, p), x)
    hess_fd = fd_hessian(lambda p: forward_jet(params, p).grad, x)
    return [
        _record("network gradient vs finite differences", relative_error(jet.grad, grad_fd), 1e-6),
        _record("network Hessian vs finite differences", relative_error(jet.hess, hess_fd), 1e-6),
    ]


def check_param_gradient(seed: int = 0, count: int = 10) -> CheckRecord:
    """Autograd loss gradient on a [3, 20, 1] network against central differences."""
    problem = manufactured_problem("example1", "sphere")
    training = random_surface_points(get_surface("sphere"), count, seed)
    params = xavier_init([3, 20, 1], seed)
    _, gradient = loss_and_gradient(problem, params, training)
    reference = fd_param_gradient(lambda flat: loss(problem, params.with_flat(flat), training),
                                  params.flat())
    return _record("loss parameter gradient vs finite differences",
                   relative_error(gradient, reference), 1e-5)


def check_sphere_operators(points: PointSet) -> List[CheckRecord]:
    """Assembled operators against the unit-sphere Cartesian closed forms."""
    records = []
    x = points.positions
    for test_field in sphere_test_fields():
        jet = test_field.jet(x)
        error = max(
            float(np.max(np.abs(surface_gradient(jet, points.points)
                                - unit_sphere_gradient(jet.grad, x)))),
            float(np.max(np.abs(surface_laplacian(jet, points.points)
                                - unit_sphere_laplacian(jet.grad, jet.hess, x)))),
        )
        records.append(_record(f"sphere operators for u = {test_field.name}", error, 1e-10))
    eigen = sphere_test_fields()[0].jet(x)
    records.append(
        _record(
            "Laplace-Beltrami of x on the unit sphere equals -2x",
            float(np.max(np.abs(surface_laplacian(eigen, points.points) + 2 * x[:, 0]))),
            1e-12,
        )
    )
    return records


def check_curvatures(seed: int = 0, count: int = 20) -> List[CheckRecord]:
    """Closed-form H_S values and the normal-divergence cross-check."""
    records = []
    for radius in (0.5, 1.0, 2.0):
        sphere = get_surface("sphere", radius=radius)
        frame = random_surface_points(sphere, count, seed).points
        records.append(
            _record(f"H_S on sphere of radius {radius:g}",
                    float(np.max(np.abs(frame.mean_curv_sum - 2.0 / radius))), 1e-8)
        )
    outer = surface_frame(get_surface("torus"), np.array([[4.0 / 3.0, 0.0, 0.0]]))
    records.append(_record("H_S at the torus outer equator",
                           abs(float(outer.mean_curv_sum[0]) - 3.75), 1e-6))
    for name in ("sphere", "torus", "cdp", "bretzel2", "orthocircle"):
        surface = get_surface(name)
        frame = random_surface_points(surface, count, seed).points
        brute = fd_normal_divergence(surface, frame.position)
        records.append(_record(f"H_S vs divergence of the normal on {name}",
                               relative_error(frame.mean_curv_sum, brute), 1e-5))
    return records


def run_derivative_checks(seed: int = 0, sphere_points: int = 100) -> List[CheckRecord]:
    """Run every check and return the records in a fixed order."""
    points = minimum_energy_points(
        get_surface("sphere"), sphere_points, seed, iters=50, config=SamplingConfig()
    )
    records = check_network_jet(seed)
    records.append(check_param_gradient(seed))
    records.extend(check_sphere_operators(points))
    records.extend(check_curvatures(seed))
    failed = sum(not r.passed for r in records)
    logger.info(f"Derivative checks: {len(records) - failed} passed, {failed} failed")
    return records


def residual_of_reference(problem: PdeProblem, points: PointSet) -> float:
    """Mean squared residual when the exact solution's jet replaces the network."""
    r = residual(problem, problem.reference.jet(points.positions), points.points)
    return float(np.mean(r * r))


__all__ = [
    "CheckRecord",
    "fd_gradient",
    "fd_hessian",
    "fd_normal_divergence",
    "fd_param_gradient",
    "relative_error",
    "residual_of_reference",
    "run_derivative_checks",
    "sphere_test_fields",
    "unit_sphere_gradient",
    "unit_sphere_laplacian",
]
