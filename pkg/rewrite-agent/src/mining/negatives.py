from typing import Dict, List, Sequence

import structlog

from logstore.context import ContextWindows
from logstore.models import LogCorpus, SessionRecord
from mining.candidates import map_users
from mining.models import MiningThresholds, TrainingSample
from mining.terms import REJECT_TOKEN

logger = structlog.get_logger()


def negatives_in_session(session: SessionRecord, contexts: Dict, t: MiningThresholds) -> List[TrainingSample]:
    # only the last impression of a session has no reformulation after it
    pos = len(session.impressions) - 1
    last = session.impressions[pos]
    if last.max_dwell <= t.tau_long:
        return []
    return [TrainingSample(
        context=contexts[(session.session_id, pos)],
        q_orig=last.query,
        target=REJECT_TOKEN,
        session_id=session.session_id,
        timestamp=last.timestamp,
    )]


def mine_negatives(
    corpus: LogCorpus,
    t: MiningThresholds = MiningThresholds(),
    windows: ContextWindows = ContextWindows(),
    workers: int = 1,
) -> List[TrainingSample]:
    """Reject samples: the query was satisfied immediately (dwell > tau_long) and nothing followed in-session"""

    def task(sessions: Sequence[SessionRecord], contexts: Dict) -> List[TrainingSample]:
        return [n for s in sessions for n in negatives_in_session(s, contexts, t)]

    samples = map_users(corpus, windows, task, workers)
    samples.sort(key=lambda s: s.order_key)
    logger.info("Mined reject samples", negatives=len(samples), tau_long=t.tau_long)
    return samples
