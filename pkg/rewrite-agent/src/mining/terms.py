import re
from typing import FrozenSet, List

_PUNCT = re.compile(r"[^\w\s]|_")
_CJK_RUN = re.compile(r"([\u3040-\u30ff\u3400-\u4dbf\u4e00-\u9fff\uac00-\ud7af]+)")

REJECT_TOKEN = "<reject>"


def normalize_query(q: str) -> str:
    """Case-fold and collapse whitespace; the key used for V_sys, the oracle and the index"""
    return " ".join(q.lower().split())


def tokenize_ordered(q: str) -> List[str]:
    """Terms of q in first-occurrence order.

    Lowercased, punctuation stripped, split on whitespace. Runs of CJK characters
    have no whitespace to split on, so they become overlapping character bigrams
    (a lone CJK character stays a unigram).
    """
    terms: List[str] = []
    seen = set()

    def add(term: str) -> None:
        if term and term not in seen:
            seen.add(term)
            terms.append(term)

    for token in _PUNCT.sub(" ", q.lower()).split():
        for part in _CJK_RUN.split(token):
            if not part:
                continue
            if _CJK_RUN.fullmatch(part):
                if len(part) == 1:
                    add(part)
                for i in range(len(part) - 1):
                    add(part[i:i + 2])
            else:
                add(part)
    return terms


def tokenize_terms(q: str) -> FrozenSet[str]:
    return frozenset(tokenize_ordered(q))


def gain_terms(q_orig: str, q_next: str) -> FrozenSet[str]:
    """Terms introduced by the reformulation"""
    return tokenize_terms(q_next) - tokenize_terms(q_orig)
