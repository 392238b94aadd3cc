from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import structlog

from logstore.models import (
    GroundTruthEvent,
    ImpressionRecord,
    LogCorpus,
    SyntheticUser,
    VideoDoc,
)
from logstore.sessionize import DEFAULT_GAP_TIMEOUT_S, sessionize
from utils.errors import ContractError, IntegrityError, ParseError
from utils.jsonl import read_jsonl, write_jsonl

logger = structlog.get_logger()

PathLike = Union[str, Path]

LOGS_FILE = "logs.jsonl"
DOCS_FILE = "docs.jsonl"
GROUND_TRUTH_FILE = "ground_truth.jsonl"
USERS_FILE = "users.jsonl"


def _parse_lines(path: PathLike, docs: Dict[str, VideoDoc], impressions: List[ImpressionRecord]) -> None:
    for lineno, row in read_jsonl(path):
        try:
            if "query" in row:
                impressions.append(ImpressionRecord.from_dict(row))
            elif "title" in row:
                doc = VideoDoc.from_dict(row)
                if doc.doc_id in docs:
                    raise IntegrityError(f"duplicate doc_id {doc.doc_id}", doc_id=doc.doc_id, line=lineno)
                docs[doc.doc_id] = doc
            else:
                raise ParseError("line is neither an impression nor a catalog doc", line=lineno)
        except KeyError as e:
            raise ParseError(f"missing field {e.args[0]!r}", line=lineno, path=str(path)) from e
        except (TypeError, ValueError, ContractError) as e:
            raise ParseError(str(e), line=lineno, path=str(path)) from e


def _check_references(impressions: List[ImpressionRecord], docs: Dict[str, VideoDoc]) -> None:
    for impression in impressions:
        for doc_id in impression.results:
            if doc_id not in docs:
                logger.error("Dangling doc reference", doc_id=doc_id, user_id=impression.user_id)
                raise IntegrityError(f"unknown doc_id {doc_id}", doc_id=doc_id)


def ingest_logs(
    path: PathLike,
    docs_path: Optional[PathLike] = None,
    gap_timeout: float = DEFAULT_GAP_TIMEOUT_S,
) -> LogCorpus:
    """Parse a JSON-Lines impression log (optionally with a separate catalog) into a corpus.

    A line holding `query` is an impression; a line holding `title` is a catalog doc,
    so one file may carry both.
    """
    docs: Dict[str, VideoDoc] = {}
    impressions: List[ImpressionRecord] = []

    if docs_path is not None:
        _parse_lines(docs_path, docs, impressions)
    _parse_lines(path, docs, impressions)
    _check_references(impressions, docs)

    sessions = sessionize(impressions, gap_timeout)
    logger.info("Ingested logs", path=str(path), impressions=len(impressions), docs=len(docs), sessions=len(sessions))
    return LogCorpus(sessions=tuple(sessions), docs=docs)


def _read_optional(path: Path, cls) -> Optional[Tuple]:
    if not path.exists():
        return None
    return tuple(cls.from_dict(row) for _, row in read_jsonl(path))


def load_corpus(directory: PathLike, gap_timeout: float = DEFAULT_GAP_TIMEOUT_S) -> LogCorpus:
    """Load a corpus directory written by write_corpus (or by hand)"""
    directory = Path(directory)
    logs = directory / LOGS_FILE
    if not logs.exists():
        raise ParseError(f"no {LOGS_FILE} in {directory}")
    docs = directory / DOCS_FILE

    corpus = ingest_logs(logs, docs if docs.exists() else None, gap_timeout)
    ground_truth = _read_optional(directory / GROUND_TRUTH_FILE, GroundTruthEvent)
    users = _read_optional(directory / USERS_FILE, SyntheticUser)
    return LogCorpus(sessions=corpus.sessions, docs=corpus.docs, ground_truth=ground_truth, users=users)


def write_corpus(corpus: LogCorpus, directory: PathLike) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    write_jsonl(directory / DOCS_FILE, (doc.to_dict() for doc in corpus.docs.values()))
    write_jsonl(directory / LOGS_FILE, (imp.to_dict() for imp in corpus.impressions()))
    if corpus.ground_truth is not None:
        write_jsonl(directory / GROUND_TRUTH_FILE, (event.to_dict() for event in corpus.ground_truth))
    if corpus.users is not None:
        write_jsonl(directory / USERS_FILE, (user.to_dict() for user in corpus.users))

    logger.info("Wrote corpus", directory=str(directory), sessions=len(corpus.sessions))
    return directory
