from pathlib import Path
from typing import Union

import numpy as np
import structlog

from policy.features import FEATURE_NAMES
from policy.softmax import PolicyParams
from utils.errors import ContractError, FormatError

logger = structlog.get_logger()


def save_params(params: PolicyParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for name, weight in zip(FEATURE_NAMES, params.theta):
            handle.write(f"{name}\t{float(weight)!r}\n")
    logger.info("Saved policy params", path=str(path))
    return path


def load_params(path: Union[str, Path]) -> PolicyParams:
    """Read feature_name<TAB>weight lines; every feature must be present exactly once"""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"params file not found: {path}")

    weights = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or parts[0] not in FEATURE_NAMES:
            raise FormatError(f"{path}:{lineno}: expected a known feature name and a weight")
        if parts[0] in weights:
            raise FormatError(f"{path}:{lineno}: duplicate feature {parts[0]}")
        try:
            weights[parts[0]] = float(parts[1])
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: bad weight {parts[1]!r}") from e

    missing = [name for name in FEATURE_NAMES if name not in weights]
    if missing:
        raise FormatError(f"{path}: missing features {', '.join(missing)}")
    try:
        return PolicyParams(np.array([weights[name] for name in FEATURE_NAMES]))
    except ContractError as e:
        raise FormatError(f"{path}: {e.message}") from e
