"""Implicit surfaces S(x) = 0 and the geometry derived from grad S and Hess S."""

import logging
from abc import ABC, abstractmethod
from typing import List, Sequence, Tuple

import numpy as np

from ..exceptions import DegenerateGradient
from . import SurfacePoint, register_surface

logger = logging.getLogger(__name__)

# Below this |grad S| the normal is undefined and the point is rejected.
DEGENERATE_TOL = 1e-8

Jet = Tuple[np.ndarray, np.ndarray, np.ndarray]


class LevelSetSurface(ABC):
    """Base class for surfaces given as the zero set of a smooth function S.

    Subclasses implement :meth:`value`, :meth:`gradient` and :meth:`hessian`
    for positions of shape ``(..., 3)``. Each surface is negative inside, so
    grad S points outward.
    """

    name: str = ""
    bounding_box: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = (
        (-1.0, -1.0, -1.0),
        (1.0, 1.0, 1.0),
    )

    @abstractmethod
    def value(self, p: np.ndarray) -> np.ndarray:
        """Level value S(p), shape ``(...)``."""

    @abstractmethod
    def gradient(self, p: np.ndarray) -> np.ndarray:
        """grad S(p), shape ``(..., 3)``."""

    @abstractmethod
    def hessian(self, p: np.ndarray) -> np.ndarray:
        """Hess S(p), shape ``(..., 3, 3)``, exactly symmetric."""

    def jet(self, p: np.ndarray) -> Jet:
        return self.value(p), self.gradient(p), self.hessian(p)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r})"


def _split(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    return p[..., 0], p[..., 1], p[..., 2]


def _stack_hessian(hxx, hyy, hzz, hxy, hxz, hyz) -> np.ndarray:
    row0 = np.stack([hxx, hxy, hxz], axis=-1)
    row1 = np.stack([hxy, hyy, hyz], axis=-1)
    row2 = np.stack([hxz, hyz, hzz], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def _product(factors: Sequence[Jet]) -> Jet:
    """Value, gradient and Hessian of a product of scalar fields.

    Products over "all factors but k" are formed directly so vanishing
    factors never lead to a division.
    """
    values = [f[0] for f in factors]
    count = len(factors)

    def others(*skip: int) -> np.ndarray:
        out = np.ones_like(values[0])
        for j in range(count):
            if j not in skip:
                out = out * values[j]
        return out

    value = others()
    grad = np.zeros(np.shape(values[0]) + (3,))
    hess = np.zeros(np.shape(values[0]) + (3, 3))
    for k, (_, g_k, h_k) in enumerate(factors):
        w_k = others(k)
        grad = grad + w_k[..., None] * g_k
        hess = hess + w_k[..., None, None] * h_k
        for l, (_, g_l, _) in enumerate(factors):
            if l != k:
                hess = hess + others(k, l)[..., None, None] * (
                    g_k[..., :, None] * g_l[..., None, :]
                )
    return value, grad, 0.5 * (hess + np.swapaxes(hess, -1, -2))


@register_surface("sphere")
class Sphere(LevelSetSurface):
    """Sphere S = x^2 + y^2 + z^2 - r^2."""

    name = "sphere"

    def __init__(self, radius: float = 1.0):
        self.radius = float(radius)
        r = self.radius
        self.bounding_box = ((-r, -r, -r), (r, r, r))

    def value(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.sum(p * p, axis=-1) - self.radius ** 2

    def gradient(self, p: np.ndarray) -> np.ndarray:
        return 2.0 * np.asarray(p, dtype=float)

    def hessian(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(2.0 * np.eye(3), p.shape[:-1] + (3, 3)).copy()


@register_surface("torus")
class Torus(LevelSetSurface):
    """Torus S = (1 - sqrt(x^2 + y^2))^2 + z^2 - 1/9."""

    name = "torus"
    bounding_box = ((-1.4, -1.4, -0.4), (1.4, 1.4, 0.4))

    major = 1.0
    minor = 1.0 / 3.0

    def value(self, p: np.ndarray) -> np.ndarray:
        x, y, z = _split(p)
        rho = np.hypot(x, y)
        return (self.major - rho) ** 2 + z ** 2 - self.minor ** 2

    def gradient(self, p: np.ndarray) -> np.ndarray:
        x, y, z = _split(p)
        rho = np.hypot(x, y)
        scale = 2.0 * (rho - self.major) / rho
        return np.stack([scale * x, scale * y, 2.0 * z], axis=-1)

    def hessian(self, p: np.ndarray) -> np.ndarray:
        # g(rho) = (rho - R)^2 as a radial function of (x, y)
        x, y, z = _split(p)
        rho = np.hypot(x, y)
        d1 = 2.0 * (rho - self.major)
        radial = 2.0 / rho ** 2 - d1 / rho ** 3
        hxx = radial * x * x + d1 / rho
        hyy = radial * y * y + d1 / rho
        hxy = radial * x * y
        zero = np.zeros_like(x)
        return _stack_hessian(hxx, hyy, 2.0 + zero, hxy, zero, zero)


@register_surface("cdp")
class ConstantDistanceProduct(LevelSetSurface):
    """Product of distances to (+-1, 0, 0) and (0, +-1, 0), minus 1.1."""

    name = "cdp"
    bounding_box = ((-1.6, -1.6, -1.6), (1.6, 1.6, 1.6))

    centers = np.array(
        [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]
    )
    level = 1.1

    def _factors(self, p: np.ndarray) -> List[Jet]:
        p = np.asarray(p, dtype=float)
        factors = []
        for center in self.centers:
            diff = p - center
            dist = np.linalg.norm(diff, axis=-1)
            unit = diff / dist[..., None]
            hess = (np.eye(3) - unit[..., :, None] * unit[..., None, :]) / dist[
                ..., None, None
            ]
            factors.append((dist, unit, hess))
        return factors

    def value(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        out = np.ones(p.shape[:-1])
        for center in self.centers:
            out = out * np.linalg.norm(p - center, axis=-1)
        return out - self.level

    def gradient(self, p: np.ndarray) -> np.ndarray:
        return _product(self._factors(p))[1]

    def hessian(self, p: np.ndarray) -> np.ndarray:
        return _product(self._factors(p))[2]


@register_surface("bretzel2")
class Bretzel2(LevelSetSurface):
    """S = (x^2 (1 - x^2) - y^2)^2 + z^2 / 2 - 1/40."""

    name = "bretzel2"
    bounding_box = ((-1.2, -1.2, -0.35), (1.2, 1.2, 0.35))

    def value(self, p: np.ndarray) -> np.ndarray:
        x, y, z = _split(p)
        q = x ** 2 * (1.0 - x ** 2) - y ** 2
        return q ** 2 + 0.5 * z ** 2 - 1.0 / 40.0

    def gradient(self, p: np.ndarray) -> np.ndarray:
        x, y, z = _split(p)
        q = x ** 2 * (1.0 - x ** 2) - y ** 2
        return np.stack(
            [2.0 * q * (2.0 * x - 4.0 * x ** 3), 2.0 * q * (-2.0 * y), z], axis=-1
        )

    def hessian(self, p: np.ndarray) -> np.ndarray:
        x, y, z = _split(p)
        q = x ** 2 * (1.0 - x ** 2) - y ** 2
        qx = 2.0 * x - 4.0 * x ** 3
        qy = -2.0 * y
        hxx = 2.0 * qx * qx + 2.0 * q * (2.0 - 12.0 * x ** 2)
        hyy = 2.0 * qy * qy + 2.0 * q * (-2.0)
        hxy = 2.0 * qx * qy
        zero = np.zeros_like(x)
        return _stack_hessian(hxx, hyy, 1.0 + zero, hxy, zero, zero)


@register_surface("orthocircle")
class Orthocircle(LevelSetSurface):
    """Three orthogonal rings fused: a product of ring factors minus a blend."""

    name = "orthocircle"
    bounding_box = ((-1.2, -1.2, -1.2), (1.2, 1.2, 1.2))

    thickness = 0.075
    # (i, j, k): factor ((p_i^2 + p_j^2 - 1)^2 + p_k^2)
    rings = ((0, 1, 2), (1, 2, 0), (2, 0, 1))

    @staticmethod
    def _ring(p: np.ndarray, i: int, j: int, k: int) -> Jet:
        w = p[..., i] ** 2 + p[..., j] ** 2 - 1.0
        value = w ** 2 + p[..., k] ** 2
        grad = np.zeros(p.shape)
        grad[..., i] = 4.0 * w * p[..., i]
        grad[..., j] = 4.0 * w * p[..., j]
        grad[..., k] = 2.0 * p[..., k]
        hess = np.zeros(p.shape + (3,))
        hess[..., i, i] = 8.0 * p[..., i] ** 2 + 4.0 * w
        hess[..., j, j] = 8.0 * p[..., j] ** 2 + 4.0 * w
        hess[..., i, j] = hess[..., j, i] = 8.0 * p[..., i] * p[..., j]
        hess[..., k, k] = 2.0
        return value, grad, hess

    def _jet(self, p: np.ndarray) -> Jet:
        p = np.asarray(p, dtype=float)
        value, grad, hess = _product([self._ring(p, *ring) for ring in self.rings])
        k2 = self.thickness ** 2
        value = value - k2 * (1.0 + 3.0 * np.sum(p * p, axis=-1))
        grad = grad - 6.0 * k2 * p
        hess = hess - 6.0 * k2 * np.eye(3)
        return value, grad, hess

    def value(self, p: np.ndarray) -> np.ndarray:
        return self._jet(p)[0]

    def gradient(self, p: np.ndarray) -> np.ndarray:
        return self._jet(p)[1]

    def hessian(self, p: np.ndarray) -> np.ndarray:
        return self._jet(p)[2]


def normal_at(surface: LevelSetSurface, p: np.ndarray) -> np.ndarray:
    """Unit outward normal grad S / |grad S|.

    Args:
        surface: The level-set surface
        p: Position(s), shape ``(..., 3)``

    Returns:
        Unit normal(s) of the same shape

    Raises:
        DegenerateGradient: If |grad S(p)| <= 1e-8 anywhere
    """
    grad = surface.gradient(p)
    norm = np.linalg.norm(grad, axis=-1)
    _check_gradient(norm)
    return grad / norm[..., None]


def projection_matrix(n: np.ndarray) -> np.ndarray:
    """Tangent-space projector P = I - n n^T for unit normal(s) ``n``."""
    n = np.asarray(n, dtype=float)
    return np.eye(3) - n[..., :, None] * n[..., None, :]


def curvature_term(surface: LevelSetSurface, p: np.ndarray) -> np.ndarray:
    """H_S, the sum of principal curvatures, at points of a level set.

    Uses trace((I - n n^T) Hess S) / |grad S|, which equals
    trace(J(n)(I - n n^T)) for the normalized-gradient extension of n.

    Raises:
        DegenerateGradient: If |grad S(p)| <= 1e-8 anywhere
    """
    _, grad, hess = surface.jet(p)
    return _curvature(grad, hess)


def surface_frame(surface: LevelSetSurface, positions: np.ndarray) -> SurfacePoint:
    """Normals and curvature terms for a batch of positions on ``surface``.

    Raises:
        DegenerateGradient: Naming the first offending index
    """
    positions = np.asarray(positions, dtype=float)
    _, grad, hess = surface.jet(positions)
    norm = np.linalg.norm(grad, axis=-1)
    _check_gradient(norm)
    return SurfacePoint(
        position=positions,
        normal=grad / norm[..., None],
        mean_curv_sum=_curvature(grad, hess),
    )


def _curvature(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(grad, axis=-1)
    _check_gradient(norm)
    n = grad / norm[..., None]
    trace = np.trace(hess, axis1=-2, axis2=-1)
    normal_part = np.einsum("...i,...ij,...j->...", n, hess, n)
    return (trace - normal_part) / norm


def _check_gradient(norm: np.ndarray) -> None:
    bad = ~(np.asarray(norm) > DEGENERATE_TOL)
    if np.any(bad):
        index = int(np.flatnonzero(bad)[0])
        raise DegenerateGradient(
            f"|grad S| <= {DEGENERATE_TOL:g} at point index {index}; "
            "the point lies at a level-set singularity"
        )
