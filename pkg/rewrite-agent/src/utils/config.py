import json
import os
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from utils.errors import ConfigError

logger = structlog.get_logger()

M = TypeVar("M", bound=BaseModel)


class Settings(BaseModel):
    """Process-level settings read from the environment (.env is loaded by main)"""

    model_config = ConfigDict(frozen=True)

    log_level: str = "info"
    log_format: str = "json"
    session_gap_s: float = Field(1800.0, gt=0)
    h_query_window: int = Field(10, ge=0)
    h_video_window: int = Field(20, ge=0)
    workers: int = Field(1, ge=1)

    @classmethod
    def from_env(cls) -> "Settings":
        return parse_config(cls, {
            "log_level": os.getenv("LOG_LEVEL", "info").lower(),
            "log_format": os.getenv("LOG_FORMAT", "json").lower(),
            "session_gap_s": os.getenv("REWRITE_SESSION_GAP_S", "1800"),
            "h_query_window": os.getenv("REWRITE_H_QUERY_WINDOW", "10"),
            "h_video_window": os.getenv("REWRITE_H_VIDEO_WINDOW", "20"),
            "workers": os.getenv("REWRITE_WORKERS", "1"),
        })


def parse_config(cls: Type[M], data: Dict[str, Any]) -> M:
    """Validate a dict into a config model, reporting failures as ConfigError"""
    try:
        return cls.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or cls.__name__
        logger.error("Invalid configuration", model=cls.__name__, field=field, error=first.get("msg"))
        raise ConfigError(f"{cls.__name__}.{field}: {first.get('msg')}", field=field) from e


def load_config(cls: Type[M], path: Union[str, Path]) -> M:
    """Load a JSON config file into a model"""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {path} ({e.msg})") from e

    if not isinstance(data, dict):
        raise ConfigError(f"config file must hold a JSON object: {path}")

    return parse_config(cls, data)
