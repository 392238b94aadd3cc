import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterator, Mapping, Optional, Tuple

from utils.errors import ContractError


def _number(row: Mapping[str, Any], key: str) -> float:
    value = row[key]
    if isinstance(value, bool):
        raise TypeError(f"{key} must be a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{key} must be a number, got {value!r}") from e
    if not math.isfinite(number):
        raise ValueError(f"{key} must be finite, got {value!r}")
    return number


def _flag(row: Mapping[str, Any], key: str) -> bool:
    value = row.get(key, False)
    if not isinstance(value, bool):
        raise TypeError(f"{key} must be true or false, got {value!r}")
    return value


@dataclass(frozen=True)
class VideoDoc:
    """A catalog entry; topic is synthetic ground truth and never reaches the policy"""

    doc_id: str
    title: str
    tags: Tuple[str, ...] = ()
    topic: Optional[str] = None

    def __post_init__(self):
        if not self.doc_id:
            raise ContractError("doc_id must be non-empty")
        if not self.title or not self.title.strip():
            raise ContractError(f"doc {self.doc_id} has an empty title", doc_id=self.doc_id)

    def to_dict(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"doc_id": self.doc_id, "title": self.title, "tags": list(self.tags)}
        if self.topic is not None:
            row["topic"] = self.topic
        return row

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "VideoDoc":
        return cls(
            doc_id=str(row["doc_id"]),
            title=str(row["title"]),
            tags=tuple(str(t) for t in row.get("tags", ())),
            topic=row.get("topic"),
        )


@dataclass(frozen=True)
class Interaction:
    doc_id: str
    dwell_s: float
    clicked: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {"doc_id": self.doc_id, "dwell_s": self.dwell_s, "clicked": self.clicked}

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "Interaction":
        return cls(doc_id=str(row["doc_id"]), dwell_s=_number(row, "dwell_s"), clicked=_flag(row, "clicked"))


@dataclass(frozen=True)
class ImpressionRecord:
    """One search issuance with the results shown and how the user interacted"""

    user_id: str
    timestamp: float
    query: str
    results: Tuple[str, ...]
    interactions: Tuple[Interaction, ...] = ()
    region: str = ""

    def __post_init__(self):
        if not self.results:
            raise ContractError("impression has no results", user_id=self.user_id, query=self.query)
        shown = set(self.results)
        for it in self.interactions:
            if it.dwell_s < 0:
                raise ContractError(f"negative dwell on {it.doc_id}", doc_id=it.doc_id)
            if it.doc_id not in shown:
                raise ContractError(f"interaction on {it.doc_id} which was not shown", doc_id=it.doc_id)

    @property
    def max_dwell(self) -> float:
        """Maximum video dwell time; 0.0 when nothing was played"""
        return max((it.dwell_s for it in self.interactions), default=0.0)

    @property
    def clicked(self) -> bool:
        return any(it.clicked for it in self.interactions)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "user_id": self.user_id,
            "ts": self.timestamp,
            "query": self.query,
            "region": self.region,
            "results": list(self.results),
            "interactions": [it.to_dict() for it in self.interactions],
        }

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "ImpressionRecord":
        return cls(
            user_id=str(row["user_id"]),
            timestamp=_number(row, "ts"),
            query=str(row["query"]),
            results=tuple(str(d) for d in row["results"]),
            interactions=tuple(Interaction.from_dict(it) for it in row.get("interactions", ())),
            region=str(row.get("region", "")),
        )


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    user_id: str
    impressions: Tuple[ImpressionRecord, ...]


@dataclass(frozen=True)
class VideoSummary:
    """What the policy may see of a watched video"""

    doc_id: str
    title: str
    tags: Tuple[str, ...] = ()

    @classmethod
    def of(cls, doc: VideoDoc) -> "VideoSummary":
        return cls(doc_id=doc.doc_id, title=doc.title, tags=doc.tags)

    def to_dict(self) -> Dict[str, Any]:
        return {"doc_id": self.doc_id, "title": self.title, "tags": list(self.tags)}

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "VideoSummary":
        return cls(doc_id=str(row.get("doc_id", "")), title=str(row["title"]),
                   tags=tuple(str(t) for t in row.get("tags", ())))


@dataclass(frozen=True)
class UserContext:
    """C_u: recent queries, recently watched videos and the region tag, most recent first"""

    h_query: Tuple[str, ...] = ()
    h_video: Tuple[VideoSummary, ...] = ()
    geo: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "h_query": list(self.h_query),
            "h_video": [v.to_dict() for v in self.h_video],
            "geo": self.geo,
        }

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "UserContext":
        return cls(
            h_query=tuple(str(q) for q in row.get("h_query", ())),
            h_video=tuple(VideoSummary.from_dict(v) for v in row.get("h_video", ())),
            geo=str(row.get("geo", "")),
        )


@dataclass(frozen=True)
class GroundTruthEvent:
    """A planted demand-aware reformulation (synthetic corpora only)"""

    user_id: str
    session_id: str
    timestamp: float
    q_orig: str
    q_next: str
    gain_term: str

    @property
    def key(self) -> Tuple[str, float, str, str]:
        return (self.session_id, self.timestamp, self.q_orig, self.q_next)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "user_id": self.user_id,
            "session_id": self.session_id,
            "ts": self.timestamp,
            "q_orig": self.q_orig,
            "q_next": self.q_next,
            "gain_term": self.gain_term,
        }

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "GroundTruthEvent":
        return cls(
            user_id=str(row["user_id"]),
            session_id=str(row["session_id"]),
            timestamp=row["ts"],
            q_orig=str(row["q_orig"]),
            q_next=str(row["q_next"]),
            gain_term=str(row["gain_term"]),
        )


@dataclass(frozen=True)
class SyntheticUser:
    user_id: str
    topic: str
    region: str

    def to_dict(self) -> Dict[str, Any]:
        return {"user_id": self.user_id, "topic": self.topic, "region": self.region}

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "SyntheticUser":
        return cls(user_id=str(row["user_id"]), topic=str(row["topic"]), region=str(row.get("region", "")))


@dataclass(frozen=True)
class LogCorpus:
    sessions: Tuple[SessionRecord, ...] = ()
    docs: Mapping[str, VideoDoc] = field(default_factory=dict)
    ground_truth: Optional[Tuple[GroundTruthEvent, ...]] = None
    users: Optional[Tuple[SyntheticUser, ...]] = None

    def impressions(self) -> Iterator[ImpressionRecord]:
        for session in self.sessions:
            yield from session.impressions

    def user_ids(self) -> FrozenSet[str]:
        return frozenset(s.user_id for s in self.sessions) | frozenset(u.user_id for u in self.users or ())
