from typing import FrozenSet, List, Optional

from logstore.models import UserContext
from mining.models import RewritePair
from mining.terms import tokenize_ordered


def context_term_sequence(context: UserContext) -> List[str]:
    """Distinct context terms by recency: watched videos (title, then tags), then past queries"""
    ordered: List[str] = []
    seen = set()
    texts: List[str] = []
    for video in context.h_video:
        texts.append(video.title)
        texts.extend(video.tags)
    texts.extend(context.h_query)
    for text in texts:
        for term in tokenize_ordered(text):
            if term not in seen:
                seen.add(term)
                ordered.append(term)
    return ordered


def context_terms(context: UserContext) -> FrozenSet[str]:
    return frozenset(context_term_sequence(context))


def context_overlap_filter(pair: RewritePair, context: Optional[UserContext] = None) -> bool:
    """Step 1: accept iff at least one gain term appears somewhere in the user context"""
    terms = context_terms(context if context is not None else pair.context)
    return any(term in terms for term in pair.gain_terms)
