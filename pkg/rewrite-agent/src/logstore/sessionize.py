from typing import Dict, Iterable, List

import structlog

from logstore.models import ImpressionRecord, SessionRecord
from utils.errors import IntegrityError

logger = structlog.get_logger()

DEFAULT_GAP_TIMEOUT_S = 1800.0


def session_id_for(user_id: str, index: int) -> str:
    return f"{user_id}#{index:04d}"


def sessionize(records: Iterable[ImpressionRecord], gap_timeout: float = DEFAULT_GAP_TIMEOUT_S) -> List[SessionRecord]:
    """Partition impressions into per-user sessions.

    A new session starts when the gap to the previous impression of the same user
    is >= gap_timeout. Output is ordered by user_id, then time.

    Raises:
        IntegrityError: a user has two impressions at the same timestamp
    """
    by_user: Dict[str, List[ImpressionRecord]] = {}
    for record in records:
        by_user.setdefault(record.user_id, []).append(record)

    sessions: List[SessionRecord] = []
    for user_id in sorted(by_user):
        ordered = sorted(by_user[user_id], key=lambda r: r.timestamp)
        current: List[ImpressionRecord] = []
        index = 0
        for record in ordered:
            if current and record.timestamp == current[-1].timestamp:
                logger.error("Duplicate impression timestamp", user_id=user_id, ts=record.timestamp)
                raise IntegrityError(f"user {user_id} has two impressions at ts {record.timestamp}",
                                     user_id=user_id, ts=record.timestamp)
            if current and record.timestamp - current[-1].timestamp >= gap_timeout:
                sessions.append(SessionRecord(session_id_for(user_id, index), user_id, tuple(current)))
                index += 1
                current = []
            current.append(record)
        if current:
            sessions.append(SessionRecord(session_id_for(user_id, index), user_id, tuple(current)))

    logger.debug("Sessionized impressions", users=len(by_user), sessions=len(sessions))
    return sessions
