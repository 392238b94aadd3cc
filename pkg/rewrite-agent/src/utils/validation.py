import re
from typing import Any, Dict, Mapping

import structlog

from logstore.models import UserContext
from serving.models import SearchRequest
from utils.errors import ContractError, ParseError

logger = structlog.get_logger()

MAX_QUERY_CHARS = 200
MAX_HISTORY = 100

_CONTROL_CHARS = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")


def validate_query(query: Any) -> str:
    """
    Validate an incoming query string

    Args:
        query: The raw query text

    Returns:
        The query with surrounding whitespace stripped

    Raises:
        ContractError: If the query is empty, too long or holds control characters
    """
    if not isinstance(query, str) or not query.strip():
        raise ContractError("query must be a non-empty string")

    query = query.strip()
    if len(query) > MAX_QUERY_CHARS:
        raise ContractError(f"query must be no more than {MAX_QUERY_CHARS} characters long")

    if _CONTROL_CHARS.search(query):
        raise ContractError("query contains control characters")

    return query


def _validate_context(raw: Any) -> UserContext:
    if raw is None:
        return UserContext()
    if not isinstance(raw, Mapping):
        raise ContractError("context must be a JSON object")

    for key in ("h_query", "h_video"):
        value = raw.get(key, [])
        if not isinstance(value, list):
            raise ContractError(f"context.{key} must be a list")
        if len(value) > MAX_HISTORY:
            raise ContractError(f"context.{key} holds more than {MAX_HISTORY} entries")

    try:
        return UserContext.from_dict(raw)
    except (KeyError, TypeError, ContractError) as e:
        raise ContractError(f"malformed context: {e}") from e


def validate_search_request(row: Dict[str, Any], lineno: int = 0) -> SearchRequest:
    """Turn one request line into a SearchRequest, reporting problems with the line number"""
    try:
        query = validate_query(row.get("query"))
        context = _validate_context(row.get("context"))
        request_id = str(row.get("request_id") or f"req-{lineno:06d}")
    except ContractError as e:
        logger.warning("Rejected search request", line=lineno, error=e.message)
        raise ParseError(e.message, line=lineno) from e

    logger.debug("Search request validation passed", request_id=request_id, query=query[:50])
    return SearchRequest(query, context, request_id)
