"""Point sets on surfaces and their CSV persistence."""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Union

import numpy as np

from ..exceptions import PointSetFormatError
from ..geometry import SurfacePoint
from ..utils import ensure_directory_exists

logger = logging.getLogger(__name__)

CSV_HEADER = "x,y,z,nx,ny,nz,H"

_FILENAME = re.compile(
    r"^(?P<surface>[a-z0-9]+)_(?P<kind>quasi_uniform|random_subset|parametric_grid|random)"
    r"_(?P<count>\d+)_(?P<seed>-?\d+)\.csv$"
)


class PointSetKind(str, Enum):
    """How a point set was produced."""

    QUASI_UNIFORM = "quasi_uniform"
    RANDOM_SUBSET = "random_subset"
    PARAMETRIC_GRID = "parametric_grid"
    RANDOM = "random"


@dataclass
class PointSet:
    """An ordered batch of surface points.

    Attributes:
        points: Batched SurfacePoint (positions ``(N, 3)``)
        surface_name: Registry name of the surface
        seed: Generation seed
        kind: How the set was produced
        parent_indices: For random subsets, indices into the parent set
        energy_history: Riesz energy after each minimum-energy sweep
    """

    points: SurfacePoint
    surface_name: str
    seed: int
    kind: PointSetKind
    parent_indices: Optional[np.ndarray] = None
    energy_history: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.points.position.shape[0])

    def __getitem__(self, index: int) -> SurfacePoint:
        return self.points[index]

    def __iter__(self) -> Iterator[SurfacePoint]:
        for index in range(len(self)):
            yield self.points[index]

    @property
    def positions(self) -> np.ndarray:
        return self.points.position

    @property
    def filename(self) -> str:
        return f"{self.surface_name}_{self.kind.value}_{len(self)}_{self.seed}.csv"

    def save_csv(self, directory: Union[str, Path]) -> Path:
        """Write the set as ``<surface>_<kind>_<count>_<seed>.csv`` in ``directory``.

        Returns:
            Path to the written file
        """
        path = ensure_directory_exists(Path(directory) / self.filename)
        table = np.column_stack(
            [self.points.position, self.points.normal, self.points.mean_curv_sum]
        )
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=CSV_HEADER, comments="")
        logger.info(f"Wrote {len(self)} points to {path}")
        return path

    @classmethod
    def load_csv(cls, path: Union[str, Path]) -> "PointSet":
        """Read a point set written by :meth:`save_csv`.

        Raises:
            PointSetFormatError: If the filename or header does not match
        """
        path = Path(path)
        match = _FILENAME.match(path.name)
        if match is None:
            raise PointSetFormatError(
                f"Unrecognised point-set filename: {path.name} "
                "(expected <surface>_<kind>_<count>_<seed>.csv)"
            )
        try:
            with open(path, "r", encoding="utf-8") as f:
                header = f.readline().strip()
            if header != CSV_HEADER:
                raise PointSetFormatError(f"Bad header in {path}: {header!r}")
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except OSError as e:
            raise PointSetFormatError(f"Cannot read point set {path}: {e}") from e
        if table.shape[1] != 7 or table.shape[0] != int(match["count"]):
            raise PointSetFormatError(
                f"{path}: expected {match['count']} rows of 7 columns, got {table.shape}"
            )
        return cls(
            points=SurfacePoint(
                position=table[:, 0:3], normal=table[:, 3:6], mean_curv_sum=table[:, 6]
            ),
            surface_name=match["surface"],
            seed=int(match["seed"]),
            kind=PointSetKind(match["kind"]),
        )
