from enum import Enum
from typing import Callable, Protocol

import structlog

from logstore.models import UserContext
from mining.filters import context_terms
from mining.models import RewritePair
from mining.prompts import render_verification_prompt
from mining.terms import gain_terms
from utils.errors import ConfigError, VerificationError

logger = structlog.get_logger()


class Verdict(str, Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"


class IntentVerifier(Protocol):
    name: str

    def verify(self, context: UserContext, q_orig: str, q_next: str) -> Verdict:
        ...


class ReferenceVerifier:
    """Deterministic stand-in for an annotator model.

    Positive iff every gain term appears in the context term set; an empty gain set
    is Negative since nothing is explicitly supported.
    """

    name = "reference"

    def verify(self, context: UserContext, q_orig: str, q_next: str) -> Verdict:
        gained = gain_terms(q_orig, q_next)
        if not gained:
            return Verdict.NEGATIVE
        return Verdict.POSITIVE if gained <= context_terms(context) else Verdict.NEGATIVE


class PromptVerifier:
    """Adapts a text-completion callable (prompt -> answer) into an IntentVerifier"""

    name = "prompt"

    def __init__(self, complete: Callable[[str], str]):
        self.complete = complete

    def verify(self, context: UserContext, q_orig: str, q_next: str) -> Verdict:
        prompt = render_verification_prompt(context, q_orig, q_next)
        try:
            answer = self.complete(prompt)
        except Exception as e:
            logger.error("Verifier call failed", q_orig=q_orig, q_next=q_next, error=str(e))
            raise VerificationError(f"verifier call failed: {e}") from e

        word = (answer or "").strip().strip(".\"'").lower()
        if word == "positive":
            return Verdict.POSITIVE
        if word == "negative":
            return Verdict.NEGATIVE
        raise VerificationError(f"unparseable verifier answer {answer!r}", answer=answer)


VERIFIERS = {"reference": ReferenceVerifier}


def make_verifier(name: str) -> IntentVerifier:
    try:
        return VERIFIERS[name]()
    except KeyError:
        raise ConfigError(f"unknown verifier {name!r} (available: {', '.join(sorted(VERIFIERS))})")


def verify_intent(pair: RewritePair, verifier: IntentVerifier) -> Verdict:
    """Step 2: ask the verifier whether the reformulation is grounded in context"""
    return verifier.verify(pair.context, pair.q_orig, pair.q_next)
