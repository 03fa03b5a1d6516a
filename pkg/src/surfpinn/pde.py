"""Surface differential operators, manufactured problems and the collocation loss.

The operators assemble surface quantities from Euclidean jets:

    grad_S u = grad u - (n . grad u) n
    lap_S u  = tr Hess u - H_S (n . grad u) - n^T Hess u n

and accept numpy arrays or torch tensors with leading batch dimensions.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import torch

from .exceptions import EmptyTrainingSet, ProblemError, UnknownProblem
from .geometry import SurfacePoint, get_surface
from .net import (
    DTYPE,
    Array,
    Jet2,
    MlpParams,
    forward_jet,
    num_parameters,
    scalar_param_gradient,
)
from .sampling import PointSet

logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AnalyticField:
    """A scalar field with closed-form value, gradient and Hessian."""

    name: str
    value: FieldFn
    grad: FieldFn
    hess: FieldFn

    def jet(self, positions: np.ndarray) -> Jet2:
        positions = np.asarray(positions, dtype=float)
        return Jet2(self.value(positions), self.grad(positions), self.hess(positions))


_TRIG = {
    "sin": (np.sin, np.cos, lambda t: -np.sin(t)),
    "cos": (np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)),
}


def trig_product(kinds: Sequence[str]) -> AnalyticField:
    """The field f0(x) f1(y) f2(z) with each factor ``sin`` or ``cos``.

    Args:
        kinds: One of ``"sin"``/``"cos"`` per coordinate

    Returns:
        The field with exact derivatives
    """
    kinds = tuple(kinds)
    if len(kinds) != 3 or any(k not in _TRIG for k in kinds):
        raise ProblemError(f"trig_product needs three of sin/cos, got {kinds}")

    def factors(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        f = np.stack([_TRIG[k][0](p[..., i]) for i, k in enumerate(kinds)], axis=-1)
        d1 = np.stack([_TRIG[k][1](p[..., i]) for i, k in enumerate(kinds)], axis=-1)
        d2 = np.stack([_TRIG[k][2](p[..., i]) for i, k in enumerate(kinds)], axis=-1)
        return f, d1, d2

    def value(p: np.ndarray) -> np.ndarray:
        f, _, _ = factors(p)
        return f[..., 0] * f[..., 1] * f[..., 2]

    def grad(p: np.ndarray) -> np.ndarray:
        f, d1, _ = factors(p)
        return np.stack(
            [
                d1[..., 0] * f[..., 1] * f[..., 2],
                f[..., 0] * d1[..., 1] * f[..., 2],
                f[..., 0] * f[..., 1] * d1[..., 2],
            ],
            axis=-1,
        )

    def hess(p: np.ndarray) -> np.ndarray:
        f, d1, d2 = factors(p)
        out = np.empty(p.shape[:-1] + (3, 3))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            out[..., i, i] = d2[..., i] * f[..., j] * f[..., k]
            out[..., i, j] = out[..., j, i] = d1[..., i] * d1[..., j] * f[..., k]
        return out

    return AnalyticField(" ".join(f"{k} {c}" for k, c in zip(kinds, "xyz")), value, grad, hess)


def _like(values: np.ndarray, ref: Array) -> Array:
    if isinstance(ref, torch.Tensor):
        return torch.as_tensor(values, dtype=ref.dtype)
    return values


def surface_gradient(jet: Jet2, pt: SurfacePoint) -> Array:
    """Tangential gradient grad u - (n . grad u) n."""
    n = _like(pt.normal, jet.grad)
    normal_derivative = (n * jet.grad).sum(-1)
    return jet.grad - normal_derivative[..., None] * n


def surface_laplacian(jet: Jet2, pt: SurfacePoint) -> Array:
    """Laplace-Beltrami operator from the Euclidean jet.

    Args:
        jet: Value, gradient and Hessian of u at the points
        pt: Points with unit normals and curvature terms H_S

    Returns:
        tr Hess u - H_S (n . grad u) - n^T Hess u n
    """
    n = _like(pt.normal, jet.grad)
    curvature = _like(pt.mean_curv_sum, jet.grad)
    trace = jet.hess[..., 0, 0] + jet.hess[..., 1, 1] + jet.hess[..., 2, 2]
    normal_derivative = (n * jet.grad).sum(-1)
    second_normal = (n[..., :, None] * jet.hess * n[..., None, :]).sum((-2, -1))
    return trace - curvature * normal_derivative - second_normal


@dataclass
class PdeProblem:
    """The elliptic problem a lap_S u - b . grad_S u + c u = f on a closed surface.

    The forcing is the operator applied to the reference solution's exact jet.
    """

    name: str
    a: float
    b: np.ndarray
    c: float
    reference: AnalyticField
    surface_name: str

    def __post_init__(self) -> None:
        self.b = np.asarray(self.b, dtype=float)
        if self.a == 0:
            raise ProblemError(f"{self.name}: the coefficient a must be nonzero")
        if self.b.shape != (3,):
            raise ProblemError(f"{self.name}: b must be a 3-vector, got shape {self.b.shape}")

    def reference_u(self, positions: np.ndarray) -> np.ndarray:
        return self.reference.value(np.asarray(positions, dtype=float))

    def forcing(self, pt: SurfacePoint) -> np.ndarray:
        return apply_operator(self, self.reference.jet(pt.position), pt)

    def describe(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "a": self.a,
            "b": self.b.tolist(),
            "c": self.c,
            "reference": self.reference.name,
            "surface": self.surface_name,
        }


def apply_operator(problem: PdeProblem, jet: Jet2, pt: SurfacePoint) -> Array:
    """(a lap_S - b . grad_S + c) u at the points."""
    b = _like(problem.b, jet.grad)
    return (
        problem.a * surface_laplacian(jet, pt)
        - (b * surface_gradient(jet, pt)).sum(-1)
        + problem.c * jet.value
    )


def residual(
    problem: PdeProblem, jet: Jet2, pt: SurfacePoint, forcing: Optional[Array] = None
) -> Array:
    """Pointwise PDE residual; ``forcing`` may be passed when precomputed."""
    if forcing is None:
        forcing = problem.forcing(pt)
    return apply_operator(problem, jet, pt) - _like(forcing, jet.value)


def _require_points(training: PointSet) -> None:
    if len(training) == 0:
        raise EmptyTrainingSet("The training set has no points")


def loss(problem: PdeProblem, params: MlpParams, training: PointSet) -> float:
    """Mean squared residual of the network over the training points.

    Raises:
        EmptyTrainingSet: If ``training`` has no points
    """
    _require_points(training)
    jet = forward_jet(params, training.positions)
    r = residual(problem, jet, training.points)
    return float(np.mean(r * r))


def _torch_points(points: SurfacePoint) -> SurfacePoint:
    return SurfacePoint(
        position=torch.as_tensor(points.position, dtype=DTYPE),
        normal=torch.as_tensor(points.normal, dtype=DTYPE),
        mean_curv_sum=torch.as_tensor(points.mean_curv_sum, dtype=DTYPE),
    )


@dataclass
class CollocationLoss:
    """The training objective as a function of the flat parameter vector.

    Calling it returns ``(loss, gradient)``; the forcing is computed once.
    """

    problem: PdeProblem
    training: PointSet
    layer_sizes: Sequence[int]
    evaluations: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        _require_points(self.training)
        self._points = _torch_points(self.training.points)
        self._forcing = torch.as_tensor(
            self.problem.forcing(self.training.points), dtype=DTYPE
        )
        self._template = MlpParams.from_flat(
            self.layer_sizes, np.zeros(num_parameters(self.layer_sizes))
        )

    def _squared_residual(self, jet: Jet2, index: torch.Tensor) -> torch.Tensor:
        r = apply_operator(self.problem, jet, self._points) - self._forcing[index]
        return r * r

    def __call__(self, flat: np.ndarray) -> Tuple[float, np.ndarray]:
        self.evaluations += 1
        params = self._template.with_flat(flat)
        return scalar_param_gradient(params, self.training.positions, self._squared_residual)


def loss_and_gradient(
    problem: PdeProblem, params: MlpParams, training: PointSet
) -> Tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the flat parameters."""
    return CollocationLoss(problem, training, params.layer_sizes)(params.flat())


_PROBLEMS: Dict[str, Tuple[float, Tuple[float, float, float], float, Tuple[str, str, str]]] = {
    "example1": (1.0, (1.0, 1.0, 1.0), 5.0, ("sin", "sin", "sin")),
    "example2": (1.0, (1.0, 1.0, 1.0), 1.0, ("sin", "cos", "sin")),
}


def available_problems() -> Sequence[str]:
    return sorted(_PROBLEMS)


def manufactured_problem(name: str, surface_name: str) -> PdeProblem:
    """Build one of the manufactured problems on a registered surface.

    Args:
        name: ``example1`` (c = 5, u = sin x sin y sin z) or
            ``example2`` (c = 1, u = sin x cos y sin z)
        surface_name: Registered surface

    Raises:
        UnknownProblem: If ``name`` is not a known problem
        UnknownSurface: If the surface is not registered
    """
    if name not in _PROBLEMS:
        raise UnknownProblem(
            f"No problem named '{name}'. Available: {', '.join(available_problems())}"
        )
    get_surface(surface_name)
    a, b, c, kinds = _PROBLEMS[name]
    return PdeProblem(name, a, np.array(b), c, trig_product(kinds), surface_name)
