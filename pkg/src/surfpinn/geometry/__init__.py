"""Closed surfaces for surfpinn.

Surfaces are registered by name so experiments can address them from a
configuration file. Level-set surfaces provide S, grad S and Hess S; the
parametric RBC surface provides a chart and its partial derivatives.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Type, TypeVar, Union

import numpy as np

from ..exceptions import UnknownSurface

logger = logging.getLogger(__name__)

# Dictionary to store registered surfaces
_SURFACES: Dict[str, Type[Any]] = {}

T = TypeVar("T")


def register_surface(name: str) -> Callable[[Type[T]], Type[T]]:
    """Decorator to register a surface class under a name.

    Args:
        name: Registry key (e.g., 'torus', 'rbc')
    """
    def decorator(surface_class: Type[T]) -> Type[T]:
        _SURFACES[name.lower()] = surface_class
        return surface_class
    return decorator


def get_surface(name: str, **kwargs: Any) -> Union["LevelSetSurface", "ParametricSurface"]:
    """Get a surface instance by name.

    Args:
        name: The registered surface name
        **kwargs: Constructor options (e.g., ``radius`` for the sphere)

    Returns:
        An instance of the registered surface

    Raises:
        UnknownSurface: If no surface is registered under the name
    """
    key = name.lower()
    if key not in _SURFACES:
        raise UnknownSurface(
            f"No surface registered as '{name}'. "
            f"Available: {', '.join(available_surfaces())}"
        )
    return _SURFACES[key](**kwargs)


def available_surfaces() -> List[str]:
    """Names of all registered surfaces, sorted."""
    return sorted(_SURFACES)


def is_level_set(name: str) -> bool:
    """Whether the named surface is described implicitly by S(x) = 0."""
    return isinstance(get_surface(name), LevelSetSurface)


@dataclass(frozen=True)
class SurfacePoint:
    """A collocation point with its unit normal and curvature term H_S.

    Fields may carry leading batch dimensions: ``position`` and ``normal``
    are ``(..., 3)`` and ``mean_curv_sum`` is ``(...)``.
    """

    position: np.ndarray
    normal: np.ndarray
    mean_curv_sum: np.ndarray

    def __len__(self) -> int:
        return int(np.shape(self.position)[0]) if np.ndim(self.position) > 1 else 1

    def __getitem__(self, index: Any) -> "SurfacePoint":
        return SurfacePoint(
            position=self.position[index],
            normal=self.normal[index],
            mean_curv_sum=self.mean_curv_sum[index],
        )


from .levelset import (  # noqa: E402
    LevelSetSurface,
    curvature_term,
    normal_at,
    projection_matrix,
    surface_frame,
)
from .parametric import ParametricSurface, SphereChart, parametric_point  # noqa: E402

__all__ = [
    "SurfacePoint",
    "LevelSetSurface",
    "ParametricSurface",
    "SphereChart",
    "register_surface",
    "get_surface",
    "available_surfaces",
    "is_level_set",
    "normal_at",
    "projection_matrix",
    "curvature_term",
    "surface_frame",
    "parametric_point",
]
