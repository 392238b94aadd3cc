from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple

from logstore.models import UserContext
from utils.errors import ContractError


class DocSource(str, Enum):
    MAIN = "main"
    FAKE = "fake"


@dataclass(frozen=True)
class SearchRequest:
    query: str
    context: UserContext = UserContext()
    request_id: str = ""

    def __post_init__(self):
        if not self.query or not self.query.strip():
            raise ContractError("search request query must be non-empty", request_id=self.request_id)

    def to_dict(self) -> Dict[str, Any]:
        return {"request_id": self.request_id, "query": self.query, "context": self.context.to_dict()}

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "SearchRequest":
        return cls(
            query=str(row["query"]),
            context=UserContext.from_dict(row.get("context", {})),
            request_id=str(row.get("request_id", "")),
        )


@dataclass(frozen=True)
class FusedDoc:
    doc_id: str
    source: DocSource
    score: float


@dataclass(frozen=True)
class FusionResult:
    request_id: str
    docs: Tuple[FusedDoc, ...]
    e2e_latency_ms: float
    rewrite_used: Optional[str] = None
    rewrite_attempted: Optional[str] = None
    index_hit: bool = False
    rewrite_timed_out: bool = False

    def __post_init__(self):
        ids = [d.doc_id for d in self.docs]
        if len(set(ids)) != len(ids):
            raise ContractError("fused result holds a duplicate doc", request_id=self.request_id)

    def docs_from(self, source: DocSource) -> Tuple[str, ...]:
        return tuple(d.doc_id for d in self.docs if d.source is source)

    @property
    def main_docs(self) -> Tuple[str, ...]:
        return self.docs_from(DocSource.MAIN)

    @property
    def fake_docs(self) -> Tuple[str, ...]:
        return self.docs_from(DocSource.FAKE)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "request_id": self.request_id,
            "docs": [{"doc_id": d.doc_id, "source": d.source.value, "score": d.score} for d in self.docs],
            "e2e_latency_ms": self.e2e_latency_ms,
            "rewrite_used": self.rewrite_used,
            "rewrite_attempted": self.rewrite_attempted,
            "index_hit": self.index_hit,
            "rewrite_timed_out": self.rewrite_timed_out,
        }
