"""Utility functions for the surfpinn package."""

import json
import logging
from pathlib import Path
from typing import Any, List, Sequence, Union

logger = logging.getLogger(__name__)


def ensure_directory_exists(path: Union[str, Path]) -> Path:
    """Ensure that the directory for a file path exists.

    Args:
        path: File path

    Returns:
        Path object with ensured parent directory
    """
    path = Path(path).resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: Union[str, Path], data: Any) -> Path:
    """Write ``data`` as indented JSON with sorted keys.

    Sorted keys keep files byte-identical across runs with equal content.
    """
    path = ensure_directory_exists(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def decimate(values: Sequence[float], limit: int = 1000) -> List[float]:
    """Evenly thin a history to at most ``limit`` entries, keeping both ends.

    Args:
        values: Full history
        limit: Maximum number of entries (at least 2)

    Returns:
        The thinned list
    """
    values = list(values)
    if len(values) <= limit:
        return values
    limit = max(limit, 2)
    step = (len(values) - 1) / (limit - 1)
    return [values[round(i * step)] for i in range(limit)]
