"""Process-wide settings read from the environment (and a ``.env`` file)."""

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

logger = logging.getLogger(__name__)

ENV_PREFIX = "SURFPINN_"
LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")


class Settings(BaseModel):
    """Defaults the CLI falls back to when an option is not given."""

    log_level: str = "INFO"
    output_dir: Path = Path("runs")
    num_threads: Optional[int] = Field(None, ge=1)
    points_dir: Optional[Path] = None

    @field_validator("log_level")
    @classmethod
    def _upper(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"Unknown log level: {value}")
        return value

    @property
    def cache_dir(self) -> Path:
        """Where generated point sets are cached."""
        return self.points_dir if self.points_dir is not None else self.output_dir / "points"


def load_settings(env_file: Optional[Path] = None) -> Settings:
    """Load ``.env`` (without overriding the environment) and build Settings.

    Args:
        env_file: Explicit dotenv file; the nearest ``.env`` is used otherwise
    """
    load_dotenv(env_file, override=False)
    values = {}
    for name in Settings.model_fields:
        raw = os.environ.get(f"{ENV_PREFIX}{name.upper()}")
        if raw not in (None, ""):
            values[name] = raw
    return Settings(**values)
