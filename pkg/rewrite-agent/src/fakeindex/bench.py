import time
from typing import Dict

import numpy as np
import structlog
from pydantic import BaseModel

from fakeindex.builder import EntrySource, FakeIndex, IndexEntry, lookup

logger = structlog.get_logger()


class LookupBenchmark(BaseModel):
    entries: int
    probes: int
    median_ns: float
    p99_ns: float


def synthetic_index(n_entries: int, docs_per_entry: int = 50) -> FakeIndex:
    """n_entries distinct queries sharing one doc list"""
    docs = tuple((f"d{j:05d}", float(docs_per_entry - j)) for j in range(docs_per_entry))
    entries: Dict[str, IndexEntry] = {}
    for i in range(n_entries):
        query = f"query {i}"
        entries[query] = IndexEntry(query, docs, EntrySource.RETRIEVAL)
    return FakeIndex(entries, docs_per_entry)


def benchmark_lookup(index: FakeIndex, probes: int = 100_000, seed: int = 0) -> LookupBenchmark:
    """Wall-clock latency of single lookups of random indexed keys"""
    keys = list(index.entries)
    rng = np.random.default_rng(seed)
    picks = [keys[i] for i in rng.integers(0, len(keys), size=probes)]

    timings = np.empty(probes)
    clock = time.perf_counter_ns
    for n, query in enumerate(picks):
        start = clock()
        lookup(index, query)
        timings[n] = clock() - start

    result = LookupBenchmark(
        entries=len(index),
        probes=probes,
        median_ns=float(np.median(timings)),
        p99_ns=float(np.percentile(timings, 99)),
    )
    logger.info("Lookup benchmark", **result.model_dump())
    return result
