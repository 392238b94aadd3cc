"""Instruction text for the intent-verification annotator and for rewrite generation"""

from textwrap import dedent

from logstore.models import UserContext
from mining.terms import REJECT_TOKEN

VERIFY_TEMPLATE = dedent("""\
    Role: you annotate short-video search sessions.
    Task: the user was not satisfied with the original query and typed a new one. Using the
    original query, the user context (region, watched videos, past searches) and the
    reformulated query, decide whether the reformulation comes from the user's context.
    Constraint: answer Positive only if every new term of the reformulated query can be
    found verbatim in the user context.
    Original query: {q_orig}
    User context:
    {context}
    Reformulated query: {q_next}
    Answer with exactly one word, Positive or Negative.""")

REWRITE_TEMPLATE = dedent("""\
    Instruction: look at the user's recently watched videos, region and past searches and
    decide whether the current query should be refined, rewritten or corrected. If it should,
    output only the new query. Otherwise output {reject}.
    User context:
    {context}
    Current query: {q_orig}""")


def render_context(context: UserContext) -> str:
    lines = [f"- region: {context.geo or 'unknown'}"]
    for video in context.h_video:
        tags = f" [{', '.join(video.tags)}]" if video.tags else ""
        lines.append(f"- watched: {video.title}{tags}")
    for query in context.h_query:
        lines.append(f"- searched: {query}")
    return "\n".join(lines)


def render_verification_prompt(context: UserContext, q_orig: str, q_next: str) -> str:
    return VERIFY_TEMPLATE.format(q_orig=q_orig, q_next=q_next, context=render_context(context))


def render_rewrite_prompt(context: UserContext, q_orig: str) -> str:
    """The input sequence a generative rewriter is conditioned on"""
    return REWRITE_TEMPLATE.format(q_orig=q_orig, reject=REJECT_TOKEN, context=render_context(context))
