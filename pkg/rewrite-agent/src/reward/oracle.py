import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Union

import structlog
from pydantic import BaseModel, ConfigDict, Field

from logstore.models import ImpressionRecord, LogCorpus
from mining.terms import REJECT_TOKEN, normalize_query
from utils.errors import ContractError, FormatError

logger = structlog.get_logger()

PathLike = Union[str, Path]

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class QueryStats:
    query: str
    freq: int
    ctr: float

    def __post_init__(self):
        if self.freq < 1:
            raise ContractError(f"freq must be >= 1 for {self.query!r}")
        if not 0.0 <= self.ctr <= 1.0:
            raise ContractError(f"ctr must be in [0, 1] for {self.query!r}")


class RewardParams(BaseModel):
    """Weights of the posterior reward; reject_reward scores the non-rewrite actions"""

    model_config = ConfigDict(frozen=True)

    lambda1: float = 1.0
    lambda2: float = 2.0
    r_penalty: float = Field(-1.0, lt=0)
    reject_reward: float = 0.0


@dataclass(frozen=True)
class RewardOracle:
    """Historical per-query statistics; the key set is V_sys"""

    stats: Mapping[str, QueryStats] = field(default_factory=dict)
    window_days: int = 180

    def __len__(self) -> int:
        return len(self.stats)

    def get(self, q: str) -> Optional[QueryStats]:
        return self.stats.get(normalize_query(q))


def build_oracle(corpus_or_records: Union[LogCorpus, Iterable[ImpressionRecord]], window_days: int = 180) -> RewardOracle:
    """Fold impressions within the trailing window (ending at the newest timestamp) into per-query stats.

    freq counts impressions; ctr is clicked impressions over impressions.
    """
    if isinstance(corpus_or_records, LogCorpus):
        records = list(corpus_or_records.impressions())
    else:
        records = list(corpus_or_records)
    if not records:
        logger.info("Built reward oracle", queries=0, window_days=window_days)
        return RewardOracle({}, window_days)

    horizon = max(r.timestamp for r in records) - window_days * SECONDS_PER_DAY
    impressions: Dict[str, int] = defaultdict(int)
    clicks: Dict[str, int] = defaultdict(int)
    for record in records:
        if record.timestamp < horizon:
            continue
        key = normalize_query(record.query)
        impressions[key] += 1
        if record.clicked:
            clicks[key] += 1

    stats = {q: QueryStats(q, n, clicks[q] / n) for q, n in impressions.items()}
    logger.info("Built reward oracle", queries=len(stats), window_days=window_days)
    return RewardOracle(stats, window_days)


def in_vocabulary(oracle: RewardOracle, q: str) -> bool:
    return oracle.get(q) is not None


def reward(oracle: RewardOracle, q: str, p: RewardParams = RewardParams()) -> float:
    """lambda1 * ln(freq) + lambda2 * ctr for q in V_sys, r_penalty otherwise"""
    stats = oracle.get(q)
    if stats is None:
        return p.r_penalty
    return p.lambda1 * math.log(stats.freq) + p.lambda2 * stats.ctr


def candidate_reward(oracle: RewardOracle, candidate: str, q_orig: str, p: RewardParams = RewardParams()) -> float:
    """Training reward of a policy action: reject and the identity are not rewrites"""
    if candidate == REJECT_TOKEN or normalize_query(candidate) == normalize_query(q_orig):
        return p.reject_reward
    return reward(oracle, candidate, p)


def save_oracle(oracle: RewardOracle, path: PathLike) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# window_days={oracle.window_days}\n")
        for q in sorted(oracle.stats):
            stats = oracle.stats[q]
            handle.write(f"{q}\t{stats.freq}\t{stats.ctr!r}\n")
    logger.info("Saved reward oracle", path=str(path), queries=len(oracle))
    return path


def load_oracle(path: PathLike) -> RewardOracle:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"oracle file not found: {path}")

    window_days = 180
    stats: Dict[str, QueryStats] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key == "window_days":
                    window_days = int(value)
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected query<TAB>freq<TAB>ctr")
            try:
                entry = QueryStats(parts[0], int(parts[1]), float(parts[2]))
            except (ValueError, ContractError) as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
            stats[entry.query] = entry

    logger.info("Loaded reward oracle", path=str(path), queries=len(stats))
    return RewardOracle(stats, window_days)
