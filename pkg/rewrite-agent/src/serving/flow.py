import asyncio
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import structlog

from fakeindex.builder import FakeIndex
from logstore.docstore import DocStore, ScoredDoc
from mining.terms import tokenize_terms
from policy.softmax import PolicyParams, distribution
from reward.oracle import RewardOracle
from serving.latency import LatencyModel
from serving.models import DocSource, FusedDoc, FusionResult, SearchRequest
from serving.recall import traditional_recall
from utils.errors import ContractError

logger = structlog.get_logger()

DEFAULT_RELEVANCE_THRESHOLD = 0.0
REQUIRE_SHARED_TERM = True


@dataclass(frozen=True)
class RewriteOutcome:
    """What the rewrite path produced: the argmax rewrite (if any) and the fake-index hit (if any)"""

    attempted: Optional[str] = None
    docs: Optional[Tuple[ScoredDoc, ...]] = None

    @property
    def hit(self) -> bool:
        return self.docs is not None


def decode_rewrite(req: SearchRequest, params: PolicyParams, index: FakeIndex, oracle: RewardOracle) -> RewriteOutcome:
    best = distribution(params, req.query, req.context, oracle).argmax()
    if not best.is_rewrite:
        return RewriteOutcome()
    entry = index.get(best.text)
    return RewriteOutcome(best.text, entry.docs if entry is not None else None)


def rewrite_path(
    req: SearchRequest,
    params: PolicyParams,
    index: FakeIndex,
    oracle: RewardOracle,
) -> Optional[Tuple[str, List[ScoredDoc]]]:
    """Argmax rewrite of the policy looked up in the fake index; None on reject, identity or miss"""
    outcome = decode_rewrite(req, params, index, oracle)
    if not outcome.hit:
        return None
    return outcome.attempted, list(outcome.docs)


def relevance_filter(
    q_orig: str,
    docs: Sequence[ScoredDoc],
    threshold: float,
    docstore: DocStore,
    require_shared_term: bool = False,
) -> List[ScoredDoc]:
    """
    Keep docs whose term Jaccard with q_orig reaches threshold or that share a term with it

    With require_shared_term a doc sharing no term with q_orig is dropped whatever
    the threshold, so threshold 0 keeps exactly the overlapping docs.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ContractError(f"relevance threshold must be in [0, 1], got {threshold}")
    q_terms = tokenize_terms(q_orig)
    kept = []
    for doc_id, score in docs:
        terms = docstore.terms(doc_id) if doc_id in docstore else frozenset()
        shared = q_terms & terms
        union = q_terms | terms
        jaccard = len(shared) / len(union) if union else 0.0
        if require_shared_term and not shared:
            continue
        if jaccard >= threshold or shared:
            kept.append((doc_id, score))
    return kept


def fuse(main_docs: Sequence[ScoredDoc], fake_docs: Sequence[ScoredDoc]) -> List[FusedDoc]:
    """Main docs in their order, then fake docs not already present"""
    fused = [FusedDoc(doc_id, DocSource.MAIN, score) for doc_id, score in main_docs]
    seen = {d.doc_id for d in fused}
    for doc_id, score in fake_docs:
        if doc_id not in seen:
            seen.add(doc_id)
            fused.append(FusedDoc(doc_id, DocSource.FAKE, score))
    return fused


def _join(
    req: SearchRequest,
    main: Sequence[ScoredDoc],
    outcome: RewriteOutcome,
    docstore: DocStore,
    lat: LatencyModel,
    relevance_threshold: float,
    require_shared_term: bool,
) -> FusionResult:
    fake: List[ScoredDoc] = []
    timed_out = outcome.hit and not lat.rewrite_in_time
    if outcome.hit and lat.rewrite_in_time:
        fake = relevance_filter(req.query, outcome.docs, relevance_threshold, docstore, require_shared_term)

    docs = fuse(main, fake)
    used = outcome.attempted if any(d.source is DocSource.FAKE for d in docs) else None
    return FusionResult(
        request_id=req.request_id,
        docs=tuple(docs),
        e2e_latency_ms=lat.e2e_ms,
        rewrite_used=used,
        rewrite_attempted=outcome.attempted,
        index_hit=outcome.hit,
        rewrite_timed_out=timed_out,
    )


def serve(
    req: SearchRequest,
    params: PolicyParams,
    index: FakeIndex,
    oracle: RewardOracle,
    docstore: DocStore,
    lat: LatencyModel = LatencyModel(),
    relevance_threshold: float = DEFAULT_RELEVANCE_THRESHOLD,
    require_shared_term: bool = REQUIRE_SHARED_TERM,
) -> FusionResult:
    """
    Both paths start at t=0 on the simulated clock

    The rewrite path (inference, lookup, filter) joins fusion only if it finishes
    by the time the main path does; otherwise it is dropped. Either way the
    end-to-end latency is main path + fusion.
    Fake docs must share a term with the original query unless
    require_shared_term is off.
    """
    main = traditional_recall(req.query, docstore)
    outcome = decode_rewrite(req, params, index, oracle)
    return _join(req, main, outcome, docstore, lat, relevance_threshold, require_shared_term)


async def serve_async(
    req: SearchRequest,
    params: PolicyParams,
    index: FakeIndex,
    oracle: RewardOracle,
    docstore: DocStore,
    lat: LatencyModel = LatencyModel(),
    relevance_threshold: float = DEFAULT_RELEVANCE_THRESHOLD,
    require_shared_term: bool = REQUIRE_SHARED_TERM,
) -> FusionResult:
    """serve() with the two paths as concurrent coroutines joined at fusion"""

    async def main_path() -> List[ScoredDoc]:
        await asyncio.sleep(0)
        return traditional_recall(req.query, docstore)

    async def rewrite() -> RewriteOutcome:
        await asyncio.sleep(0)
        return decode_rewrite(req, params, index, oracle)

    main, outcome = await asyncio.gather(main_path(), rewrite())
    return _join(req, main, outcome, docstore, lat, relevance_threshold, require_shared_term)
