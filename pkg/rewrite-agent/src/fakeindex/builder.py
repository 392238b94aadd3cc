from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import structlog
from pydantic import BaseModel, ConfigDict, Field

from logstore.models import ImpressionRecord, LogCorpus
from mining.terms import normalize_query
from utils.errors import ContractError

logger = structlog.get_logger()

ScoredDoc = Tuple[str, float]


class EntrySource(str, Enum):
    INTERACTION = "interaction"
    RETRIEVAL = "retrieval"


@dataclass(frozen=True)
class IndexEntry:
    query: str
    docs: Tuple[ScoredDoc, ...]
    source: EntrySource

    def __post_init__(self):
        ids = [d for d, _ in self.docs]
        if len(set(ids)) != len(ids):
            raise ContractError(f"duplicate doc in index entry {self.query!r}")
        keys = [(-s, d) for d, s in self.docs]
        if keys != sorted(keys):
            raise ContractError(f"index entry {self.query!r} is not sorted by descending score")

    @property
    def doc_ids(self) -> List[str]:
        return [d for d, _ in self.docs]


class BuildConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int = Field(50, ge=1)
    head_min_clicks: int = Field(5, ge=1)


@dataclass(frozen=True)
class FakeIndex:
    """Pre-computed query -> top-K documents map"""

    entries: Mapping[str, IndexEntry] = field(default_factory=dict)
    k: int = 50

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[IndexEntry]:
        return iter(self.entries.values())

    def get(self, q: str) -> Optional[IndexEntry]:
        return self.entries.get(normalize_query(q))

    def lookup(self, q: str) -> Optional[List[str]]:
        entry = self.entries.get(normalize_query(q))
        return entry.doc_ids if entry is not None else None


def lookup(index: FakeIndex, q: str) -> Optional[List[str]]:
    """Hash-map retrieval for normalized q; None on a miss"""
    return index.lookup(q)


def _rank(keys: Dict[str, Tuple[float, float]], k: int) -> Tuple[ScoredDoc, ...]:
    # (score, tiebreak), both higher-is-better; the tiebreak only orders exact score ties
    ranked = sorted(keys.items(), key=lambda item: (-item[1][0], -item[1][1], item[0]))
    return tuple((doc_id, score) for doc_id, (score, _) in ranked[:k])


def _interaction_entry(query: str, records: List[ImpressionRecord], k: int) -> IndexEntry:
    """Clicked docs by CTR (clicks over times shown), mean dwell breaking ties"""
    shown: Dict[str, int] = defaultdict(int)
    clicks: Dict[str, int] = defaultdict(int)
    dwell: Dict[str, List[float]] = defaultdict(list)
    for record in records:
        for doc_id in record.results:
            shown[doc_id] += 1
        for it in record.interactions:
            dwell[it.doc_id].append(it.dwell_s)
            if it.clicked:
                clicks[it.doc_id] += 1

    keys = {}
    for doc_id, c in clicks.items():
        keys[doc_id] = (c / shown[doc_id], sum(dwell[doc_id]) / len(dwell[doc_id]))
    return IndexEntry(query, _rank(keys, k), EntrySource.INTERACTION)


def _retrieval_entry(query: str, records: List[ImpressionRecord], k: int) -> IndexEntry:
    """Docs most often ranked in the top K of the logged result lists, better mean rank breaking ties"""
    hits: Dict[str, int] = defaultdict(int)
    rank_sum: Dict[str, int] = defaultdict(int)
    for record in records:
        for rank, doc_id in enumerate(record.results[:k]):
            hits[doc_id] += 1
            rank_sum[doc_id] += rank

    n = len(records)
    keys = {doc_id: (h / n, -rank_sum[doc_id] / h) for doc_id, h in hits.items()}
    return IndexEntry(query, _rank(keys, k), EntrySource.RETRIEVAL)


def build_index(corpus: LogCorpus, cfg: BuildConfig = BuildConfig()) -> FakeIndex:
    """
    Hybrid construction over every logged query

    Head queries (at least head_min_clicks clicked impressions) are scored from
    interactions; every other logged query falls back to its logged result ranks.
    """
    by_query: Dict[str, List[ImpressionRecord]] = defaultdict(list)
    for record in corpus.impressions():
        by_query[normalize_query(record.query)].append(record)

    entries: Dict[str, IndexEntry] = {}
    head = 0
    for query in sorted(by_query):
        records = by_query[query]
        clicked = sum(1 for r in records if r.clicked)
        if clicked >= cfg.head_min_clicks:
            entries[query] = _interaction_entry(query, records, cfg.k)
            head += 1
        else:
            entries[query] = _retrieval_entry(query, records, cfg.k)

    logger.info("Built fake index", entries=len(entries), head=head, tail=len(entries) - head, k=cfg.k)
    return FakeIndex(entries, cfg.k)
