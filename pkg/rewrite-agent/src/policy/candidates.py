from dataclasses import dataclass
from enum import Enum
from typing import List

from logstore.models import UserContext
from mining.filters import context_term_sequence
from mining.terms import REJECT_TOKEN, normalize_query, tokenize_terms
from reward.oracle import RewardOracle, in_vocabulary
from utils.errors import ContractError

MAX_APPENDED_TERMS = 20


class Provenance(str, Enum):
    IDENTITY = "identity"
    REJECT = "reject"
    CONTEXT_TERM = "context-term-append"
    CONTEXT_QUERY = "context-query"


@dataclass(frozen=True)
class Candidate:
    text: str
    provenance: Provenance

    @property
    def is_reject(self) -> bool:
        return self.provenance is Provenance.REJECT

    @property
    def is_identity(self) -> bool:
        return self.provenance is Provenance.IDENTITY

    @property
    def is_rewrite(self) -> bool:
        return not (self.is_reject or self.is_identity)


def candidate_key(text: str) -> str:
    return text if text == REJECT_TOKEN else normalize_query(text)


def generate_candidates(q: str, ctx: UserContext, oracle: RewardOracle) -> List[Candidate]:
    """
    The finite action set for one input, in a fixed order

    identity, reject, q plus each context term it lacks (first 20 by recency), then
    every in-vocabulary past query of the user that shares a term with q.
    Deduplicated by normalized text.
    """
    base = normalize_query(q)
    if not base:
        raise ContractError("cannot generate candidates for an empty query")

    candidates = [Candidate(base, Provenance.IDENTITY), Candidate(REJECT_TOKEN, Provenance.REJECT)]
    seen = {base, REJECT_TOKEN}

    def add(text: str, provenance: Provenance) -> None:
        key = candidate_key(text)
        if key not in seen:
            seen.add(key)
            candidates.append(Candidate(key, provenance))

    q_terms = tokenize_terms(q)
    appended = 0
    for term in context_term_sequence(ctx):
        if appended >= MAX_APPENDED_TERMS:
            break
        if term in q_terms:
            continue
        appended += 1
        add(f"{base} {term}", Provenance.CONTEXT_TERM)

    for past in ctx.h_query:
        if tokenize_terms(past) & q_terms and in_vocabulary(oracle, past):
            add(past, Provenance.CONTEXT_QUERY)
    return candidates
