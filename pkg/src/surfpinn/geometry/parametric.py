"""Parametric surfaces r(lambda, theta) and their differential geometry."""

import logging
from abc import ABC, abstractmethod
from typing import Optional, Sequence, Tuple

import numpy as np

from ..exceptions import DegenerateChart
from . import SurfacePoint, register_surface

logger = logging.getLogger(__name__)

# Below this |r_lambda x r_theta| the chart has no tangent plane.
CHART_TOL = 1e-10

Pair = Tuple[np.ndarray, np.ndarray]
Triple = Tuple[np.ndarray, np.ndarray, np.ndarray]


class ParametricSurface(ABC):
    """Base class for surfaces given by a chart over a parameter rectangle.

    Attributes:
        domain: ``((lam_min, lam_max), (theta_min, theta_max))``
        degenerate_values: ``(lam, theta)`` pairs where the first partials are
            dependent; ``None`` stands for "any value"
    """

    name: str = ""
    domain: Tuple[Tuple[float, float], Tuple[float, float]] = (
        (-np.pi, np.pi),
        (-np.pi / 2, np.pi / 2),
    )
    degenerate_values: Sequence[Tuple[Optional[float], Optional[float]]] = ()

    @abstractmethod
    def chart(self, lam: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Positions, shape ``(..., 3)``."""

    @abstractmethod
    def first_partials(self, lam: np.ndarray, theta: np.ndarray) -> Pair:
        """``(r_lam, r_theta)``."""

    @abstractmethod
    def second_partials(self, lam: np.ndarray, theta: np.ndarray) -> Triple:
        """``(r_lam_lam, r_lam_theta, r_theta_theta)``."""

    def random_parameters(
        self, count: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Uniform draws over the parameter rectangle."""
        (l0, l1), (t0, t1) = self.domain
        return rng.uniform(l0, l1, size=count), rng.uniform(t0, t1, size=count)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r})"


def _vec(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, y, z = np.broadcast_arrays(x, y, z)
    return np.stack([x, y, z], axis=-1)


class SphereChart(ParametricSurface):
    """Longitude/latitude chart of the unit sphere."""

    name = "sphere_chart"
    degenerate_values = ((None, -np.pi / 2), (None, np.pi / 2))

    def chart(self, lam, theta):
        lam, theta = np.asarray(lam, float), np.asarray(theta, float)
        return _vec(np.cos(lam) * np.cos(theta), np.sin(lam) * np.cos(theta), np.sin(theta))

    def first_partials(self, lam, theta):
        cl, sl, c, s = np.cos(lam), np.sin(lam), np.cos(theta), np.sin(theta)
        return _vec(-sl * c, cl * c, 0.0 * c), _vec(-cl * s, -sl * s, c)

    def second_partials(self, lam, theta):
        cl, sl, c, s = np.cos(lam), np.sin(lam), np.cos(theta), np.sin(theta)
        return (
            _vec(-cl * c, -sl * c, 0.0 * c),
            _vec(sl * s, -cl * s, 0.0 * c),
            _vec(-cl * c, -sl * c, -s),
        )


@register_surface("rbc")
class RedBloodCell(ParametricSurface):
    """Red blood cell chart.

    x = 1.15 cos(lam) cos(theta), y = 1.15 sin(lam) cos(theta),
    z = 0.5 sin(lam) (0.24 + 2.3 cos(theta)^2 - 1.3 cos(theta)^4)
    over lam in [-pi, pi], theta in [-pi/2, pi/2].

    The chart is even in theta, so theta = 0 is a fold where r_theta vanishes.
    """

    name = "rbc"
    radius = 1.15
    height = 0.5
    degenerate_values = (
        (None, 0.0),
        (-np.pi / 2, -np.pi / 2),
        (-np.pi / 2, np.pi / 2),
        (np.pi / 2, -np.pi / 2),
        (np.pi / 2, np.pi / 2),
    )

    @staticmethod
    def _profile(theta: np.ndarray) -> Triple:
        c, s = np.cos(theta), np.sin(theta)
        g = 0.24 + 2.3 * c ** 2 - 1.3 * c ** 4
        inner = 4.6 * c - 5.2 * c ** 3
        dg = -s * inner
        d2g = -c * inner - s ** 2 * (15.6 * c ** 2 - 4.6)
        return g, dg, d2g

    def chart(self, lam, theta):
        lam, theta = np.asarray(lam, float), np.asarray(theta, float)
        g, _, _ = self._profile(theta)
        a, b = self.radius, self.height
        return _vec(
            a * np.cos(lam) * np.cos(theta),
            a * np.sin(lam) * np.cos(theta),
            b * np.sin(lam) * g,
        )

    def first_partials(self, lam, theta):
        lam, theta = np.asarray(lam, float), np.asarray(theta, float)
        cl, sl, c, s = np.cos(lam), np.sin(lam), np.cos(theta), np.sin(theta)
        g, dg, _ = self._profile(theta)
        a, b = self.radius, self.height
        return (
            _vec(-a * sl * c, a * cl * c, b * cl * g),
            _vec(-a * cl * s, -a * sl * s, b * sl * dg),
        )

    def second_partials(self, lam, theta):
        lam, theta = np.asarray(lam, float), np.asarray(theta, float)
        cl, sl, c, s = np.cos(lam), np.sin(lam), np.cos(theta), np.sin(theta)
        g, dg, d2g = self._profile(theta)
        a, b = self.radius, self.height
        return (
            _vec(-a * cl * c, -a * sl * c, -b * sl * g),
            _vec(a * sl * s, -a * cl * s, b * cl * dg),
            _vec(-a * cl * c, -a * sl * c, b * sl * d2g),
        )


def parametric_point(
    surface: ParametricSurface, lam: np.ndarray, theta: np.ndarray
) -> SurfacePoint:
    """Position, outward normal and H_S from the fundamental forms of a chart.

    The normal is oriented so that ``n . r(lam, theta) >= 0``; with that
    orientation H_S = -(eG - 2fF + gE) / (EG - F^2), which is 2 on the unit
    sphere.

    Args:
        surface: The parametric surface
        lam: First parameter(s)
        theta: Second parameter(s)

    Returns:
        A (possibly batched) SurfacePoint

    Raises:
        DegenerateChart: If |r_lam x r_theta| <= 1e-10 anywhere
    """
    position = surface.chart(lam, theta)
    r_l, r_t = surface.first_partials(lam, theta)
    r_ll, r_lt, r_tt = surface.second_partials(lam, theta)

    cross = np.cross(r_l, r_t)
    area = np.linalg.norm(cross, axis=-1)
    bad = ~(area > CHART_TOL)
    if np.any(bad):
        index = int(np.flatnonzero(bad)[0])
        raise DegenerateChart(
            f"{surface.name}: |r_lam x r_theta| <= {CHART_TOL:g} at parameter index {index}"
        )
    normal = cross / area[..., None]
    flip = np.where(np.sum(normal * position, axis=-1) < 0.0, -1.0, 1.0)
    normal = normal * flip[..., None]

    e_coef = np.sum(r_l * r_l, axis=-1)
    f_coef = np.sum(r_l * r_t, axis=-1)
    g_coef = np.sum(r_t * r_t, axis=-1)
    l_coef = np.sum(r_ll * normal, axis=-1)
    m_coef = np.sum(r_lt * normal, axis=-1)
    n_coef = np.sum(r_tt * normal, axis=-1)
    mean_curv_sum = -(l_coef * g_coef - 2.0 * m_coef * f_coef + n_coef * e_coef) / (
        e_coef * g_coef - f_coef ** 2
    )
    return SurfacePoint(position=position, normal=normal, mean_curv_sum=mean_curv_sum)
