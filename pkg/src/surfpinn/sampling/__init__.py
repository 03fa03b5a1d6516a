"""Collocation and test point sets on surfaces."""

from .generators import (
    SamplingConfig,
    cache_filename,
    load_or_generate,
    minimum_energy_points,
    parametric_grid,
    project_to_surface,
    quasi_uniform_points,
    random_parametric_points,
    random_points,
    random_subset,
    random_surface_points,
    riesz_energy,
    separation_fill_ratio,
)
from .pointset import CSV_HEADER, PointSet, PointSetKind

__all__ = [
    "CSV_HEADER",
    "PointSet",
    "PointSetKind",
    "SamplingConfig",
    "cache_filename",
    "load_or_generate",
    "minimum_energy_points",
    "parametric_grid",
    "project_to_surface",
    "quasi_uniform_points",
    "random_parametric_points",
    "random_points",
    "random_subset",
    "random_surface_points",
    "riesz_energy",
    "separation_fill_ratio",
]
