from collections import deque
from typing import Deque, Dict, List, Mapping, Tuple

from pydantic import BaseModel, ConfigDict, Field

from logstore.models import ImpressionRecord, LogCorpus, SessionRecord, UserContext, VideoDoc, VideoSummary


class ContextWindows(BaseModel):
    """How much recent history a user context carries"""

    model_config = ConfigDict(frozen=True)

    h_query: int = Field(10, ge=0)
    h_video: int = Field(20, ge=0)


class HistoryTracker:
    """Rolling per-user history; snapshot() is the context strictly before the next impression"""

    def __init__(self, docs: Mapping[str, VideoDoc], windows: ContextWindows = ContextWindows()):
        self.docs = docs
        self.windows = windows
        self._queries: Deque[str] = deque(maxlen=windows.h_query)
        self._videos: List[str] = []

    def snapshot(self, geo: str = "") -> UserContext:
        return UserContext(
            h_query=tuple(self._queries),
            h_video=tuple(VideoSummary.of(self.docs[d]) for d in self._videos),
            geo=geo,
        )

    def observe(self, impression: ImpressionRecord) -> None:
        if self.windows.h_query:
            self._queries.appendleft(impression.query)
        if not self.windows.h_video:
            return
        for it in impression.interactions:
            if not it.clicked or it.doc_id not in self.docs:
                continue
            if it.doc_id in self._videos:
                self._videos.remove(it.doc_id)
            self._videos.insert(0, it.doc_id)
        del self._videos[self.windows.h_video:]


SessionPosition = Tuple[str, int]


def user_sessions(corpus: LogCorpus) -> Dict[str, List[SessionRecord]]:
    """Sessions grouped by user, each user's sessions in time order"""
    grouped: Dict[str, List[SessionRecord]] = {}
    for session in corpus.sessions:
        grouped.setdefault(session.user_id, []).append(session)
    for sessions in grouped.values():
        sessions.sort(key=lambda s: s.impressions[0].timestamp)
    return grouped


def contexts_for_sessions(
    sessions: List[SessionRecord],
    docs: Mapping[str, VideoDoc],
    windows: ContextWindows = ContextWindows(),
) -> Dict[SessionPosition, UserContext]:
    """Context before every impression of one user, keyed by (session_id, position)"""
    tracker = HistoryTracker(docs, windows)
    contexts: Dict[SessionPosition, UserContext] = {}
    for session in sessions:
        for pos, impression in enumerate(session.impressions):
            contexts[(session.session_id, pos)] = tracker.snapshot(impression.region)
            tracker.observe(impression)
    return contexts


def build_contexts(corpus: LogCorpus, windows: ContextWindows = ContextWindows()) -> Dict[SessionPosition, UserContext]:
    contexts: Dict[SessionPosition, UserContext] = {}
    for sessions in user_sessions(corpus).values():
        contexts.update(contexts_for_sessions(sessions, corpus.docs, windows))
    return contexts
