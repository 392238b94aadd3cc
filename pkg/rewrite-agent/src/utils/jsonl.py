import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, Tuple, Union

from utils.errors import ParseError

PathLike = Union[str, Path]


def read_jsonl(path: PathLike) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line_number, object) for every non-blank line"""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", line=lineno, path=str(path)) from e
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno, path=str(path))
            yield lineno, obj


def write_jsonl(path: PathLike, rows: Iterable[Dict[str, Any]]) -> int:
    """Write rows as compact, key-sorted JSON lines; returns the row count"""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")
            count += 1
    return count
