from pathlib import Path
from typing import List, Optional, Tuple, Union

import structlog
from pydantic import BaseModel, ConfigDict

from logstore.context import ContextWindows
from logstore.models import LogCorpus
from mining.candidates import mine_candidates
from mining.filters import context_overlap_filter
from mining.models import MiningThresholds, TrainingSample
from mining.negatives import mine_negatives
from mining.prompts import render_rewrite_prompt
from mining.verifier import IntentVerifier, ReferenceVerifier, Verdict, verify_intent
from utils.errors import ParseError, VerificationError
from utils.jsonl import read_jsonl, write_jsonl

logger = structlog.get_logger()

PathLike = Union[str, Path]


class MiningReport(BaseModel):
    """Stage-wise accounting; candidates = step1_rejected + step2_rejected + verification_dropped + positives"""

    model_config = ConfigDict(frozen=True)

    thresholds: MiningThresholds
    verifier: str
    candidates: int = 0
    step1_rejected: int = 0
    step2_rejected: int = 0
    verification_dropped: int = 0
    positives: int = 0
    negatives: int = 0
    samples: int = 0


def build_dataset(
    corpus: LogCorpus,
    thresholds: MiningThresholds = MiningThresholds(),
    verifier: Optional[IntentVerifier] = None,
    windows: ContextWindows = ContextWindows(),
    workers: int = 1,
) -> Tuple[List[TrainingSample], MiningReport]:
    """
    Mine D_train = S_pos ∪ S_neg from a sessionized corpus

    Args:
        corpus: Sessionized logs
        thresholds: Dwell thresholds for both positive and negative mining
        verifier: Step-2 intent verifier, the reference rule when omitted
        windows: History window sizes for the user context

    Returns:
        Samples ordered by (session_id, timestamp) and the mining report
    """
    verifier = verifier or ReferenceVerifier()
    pairs = mine_candidates(corpus, thresholds, windows, workers)

    positives: List[TrainingSample] = []
    step1_rejected = step2_rejected = dropped = 0
    for pair in pairs:
        if not context_overlap_filter(pair):
            step1_rejected += 1
            continue
        try:
            verdict = verify_intent(pair, verifier)
        except VerificationError as e:
            dropped += 1
            logger.warning("Dropped candidate", session_id=pair.session_id, reason=e.message)
            continue
        if verdict is not Verdict.POSITIVE:
            step2_rejected += 1
            continue
        positives.append(TrainingSample(pair.context, pair.q_orig, pair.q_next, pair.session_id, pair.timestamp))

    negatives = mine_negatives(corpus, thresholds, windows, workers)
    samples = sorted(positives + negatives, key=lambda s: s.order_key)

    report = MiningReport(
        thresholds=thresholds,
        verifier=getattr(verifier, "name", type(verifier).__name__),
        candidates=len(pairs),
        step1_rejected=step1_rejected,
        step2_rejected=step2_rejected,
        verification_dropped=dropped,
        positives=len(positives),
        negatives=len(negatives),
        samples=len(samples),
    )
    logger.info("Built training dataset", **report.model_dump(exclude={"thresholds"}))
    return samples, report


def write_dataset(samples: List[TrainingSample], path: PathLike, with_prompt: bool = False) -> int:
    def rows():
        for sample in samples:
            row = sample.to_dict()
            if with_prompt:
                row["prompt"] = render_rewrite_prompt(sample.context, sample.q_orig)
            yield row

    count = write_jsonl(path, rows())
    logger.info("Wrote dataset", path=str(path), samples=count)
    return count


def load_dataset(path: PathLike) -> List[TrainingSample]:
    samples: List[TrainingSample] = []
    for lineno, row in read_jsonl(path):
        try:
            samples.append(TrainingSample.from_dict(row))
        except KeyError as e:
            raise ParseError(f"missing field {e.args[0]!r}", line=lineno, path=str(path)) from e
        except Exception as e:
            raise ParseError(str(e), line=lineno, path=str(path)) from e
    return samples
