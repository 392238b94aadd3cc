from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Sequence, TypeVar

import structlog

from logstore.context import ContextWindows, contexts_for_sessions, user_sessions
from logstore.models import LogCorpus, SessionRecord, UserContext
from mining.models import MiningThresholds, RewritePair

logger = structlog.get_logger()

T = TypeVar("T")

UserTask = Callable[[List[SessionRecord], Dict], List[T]]


def map_users(corpus: LogCorpus, windows: ContextWindows, task: UserTask, workers: int = 1) -> List[T]:
    """Run task(sessions, contexts) once per user and concatenate results in user_id order"""
    grouped = user_sessions(corpus)
    user_ids = sorted(grouped)

    def run(user_id: str) -> List[T]:
        sessions = grouped[user_id]
        return task(sessions, contexts_for_sessions(sessions, corpus.docs, windows))

    if workers > 1 and len(user_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, user_ids))
    else:
        chunks = [run(u) for u in user_ids]
    return [item for chunk in chunks for item in chunk]


def pairs_in_session(
    session: SessionRecord,
    contexts: Dict,
    t: MiningThresholds,
) -> List[RewritePair]:
    pairs: List[RewritePair] = []
    impressions = session.impressions
    for pos in range(len(impressions) - 1):
        orig, nxt = impressions[pos], impressions[pos + 1]
        if orig.query == nxt.query:
            continue
        # failure on origin, success on next
        if orig.max_dwell < t.tau_short and nxt.max_dwell > t.tau_valid:
            context: UserContext = contexts[(session.session_id, pos)]
            pairs.append(RewritePair.of(context, orig.query, nxt.query, session.session_id, orig.timestamp))
    return pairs


def mine_candidates(
    corpus: LogCorpus,
    t: MiningThresholds = MiningThresholds(),
    windows: ContextWindows = ContextWindows(),
    workers: int = 1,
) -> List[RewritePair]:
    """Adjacent in-session pairs whose origin failed (dwell < tau_short) and whose follow-up succeeded (dwell > tau_valid).

    Each pair carries the user context as it stood strictly before q_orig.
    """

    def task(sessions: Sequence[SessionRecord], contexts: Dict) -> List[RewritePair]:
        return [p for s in sessions for p in pairs_in_session(s, contexts, t)]

    pairs = map_users(corpus, windows, task, workers)
    pairs.sort(key=lambda p: (p.session_id, p.timestamp))
    logger.info("Mined candidate pairs", pairs=len(pairs), tau_short=t.tau_short, tau_valid=t.tau_valid)
    return pairs
