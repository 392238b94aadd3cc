from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Mapping

from pydantic import BaseModel, ConfigDict, Field, model_validator

from logstore.models import UserContext
from mining.terms import REJECT_TOKEN, gain_terms
from utils.errors import ContractError


class MiningThresholds(BaseModel):
    """Dwell thresholds in seconds"""

    model_config = ConfigDict(frozen=True)

    tau_short: float = Field(2.4, gt=0)
    tau_valid: float = 10.0
    tau_long: float = 30.0

    @model_validator(mode="after")
    def _ordered(self) -> "MiningThresholds":
        if not self.tau_short < self.tau_valid <= self.tau_long:
            raise ValueError("thresholds must satisfy 0 < tau_short < tau_valid <= tau_long")
        return self


@dataclass(frozen=True)
class RewritePair:
    """An adjacent in-session reformulation that failed on q_orig and succeeded on q_next"""

    context: UserContext
    q_orig: str
    q_next: str
    session_id: str
    timestamp: float
    gain_terms: FrozenSet[str]

    def __post_init__(self):
        if self.q_orig == self.q_next:
            raise ContractError("a rewrite pair needs two different queries", session_id=self.session_id)

    @classmethod
    def of(cls, context: UserContext, q_orig: str, q_next: str, session_id: str, timestamp: float) -> "RewritePair":
        return cls(context, q_orig, q_next, session_id, timestamp, gain_terms(q_orig, q_next))


@dataclass(frozen=True)
class TrainingSample:
    """(C_u, Q_orig) -> target, where target is a rewrite or the reject token"""

    context: UserContext
    q_orig: str
    target: str
    session_id: str = ""
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.target or not self.target.strip():
            raise ContractError("training target must be non-empty", q_orig=self.q_orig)

    @property
    def is_reject(self) -> bool:
        return self.target == REJECT_TOKEN

    @property
    def order_key(self):
        return (self.session_id, self.timestamp, self.target)

    def to_dict(self) -> Dict[str, Any]:
        return {"context": self.context.to_dict(), "q_orig": self.q_orig, "target": self.target,
                "session_id": self.session_id, "ts": self.timestamp}

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "TrainingSample":
        return cls(
            context=UserContext.from_dict(row.get("context", {})),
            q_orig=str(row["q_orig"]),
            target=str(row["target"]),
            session_id=str(row.get("session_id", "")),
            timestamp=float(row.get("ts", 0.0)),
        )
