from typing import Iterable, Optional, Sequence

from pydantic import BaseModel, ConfigDict

from logstore.models import SessionRecord
from mining.models import MiningThresholds
from serving.models import FusionResult

VV_DWELL_S = 10.0


class Metrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    vv_gt10: int = 0
    reformulation_rate: float = 0.0
    index_hit_rate: float = 0.0
    impressions: int = 0
    searches: int = 0
    reformulations: int = 0
    rewrite_attempts: int = 0
    index_hits: int = 0


def compute_metrics(
    sessions: Iterable[SessionRecord],
    t: MiningThresholds = MiningThresholds(),
    outcomes: Optional[Sequence[FusionResult]] = None,
) -> Metrics:
    """
    vv_gt10: plays with dwell > 10s, counted per play.
    reformulation_rate: fresh searches (impressions that are not themselves a
    reformulation) whose result got a max dwell below tau_short and were followed
    in-session by another query.
    index_hit_rate: rewrite attempts that hit the fake index (from serving outcomes).
    """
    plays = impressions = searches = reformulated = reformulations = 0
    for session in sessions:
        last = len(session.impressions) - 1
        follows_failure = False
        for pos, impression in enumerate(session.impressions):
            impressions += 1
            plays += sum(1 for it in impression.interactions if it.dwell_s > VV_DWELL_S)
            failed = pos < last and impression.max_dwell < t.tau_short
            if follows_failure:
                reformulations += 1
            else:
                searches += 1
                reformulated += failed
            follows_failure = failed

    attempts = hits = 0
    for outcome in outcomes or ():
        if outcome.rewrite_attempted is not None:
            attempts += 1
            hits += outcome.index_hit

    return Metrics(
        vv_gt10=plays,
        reformulation_rate=reformulated / searches if searches else 0.0,
        index_hit_rate=hits / attempts if attempts else 0.0,
        impressions=impressions,
        searches=searches,
        reformulations=reformulations,
        rewrite_attempts=attempts,
        index_hits=hits,
    )
