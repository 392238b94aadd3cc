"""
Binary fake-index file, little-endian:

    magic      4 bytes   b"FKIX"
    version    u8        1
    k          u32
    count      u32       number of entries
    count x entry, sorted by query:
        qlen   u32, query utf-8 bytes
        source u8        0 = interaction, 1 = retrieval
        ndocs  u32
        ndocs x (idlen u16, doc_id utf-8 bytes, score f64)

A short read, unknown version or trailing bytes is a FormatError; no partial index
is ever returned.
"""

import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import structlog

from fakeindex.builder import EntrySource, FakeIndex, IndexEntry
from utils.errors import ContractError, FormatError

logger = structlog.get_logger()

MAGIC = b"FKIX"
VERSION = 1

_SOURCES = (EntrySource.INTERACTION, EntrySource.RETRIEVAL)

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")


def encode_index(index: FakeIndex) -> bytes:
    out = bytearray(MAGIC)
    out += _U8.pack(VERSION)
    out += _U32.pack(index.k)
    out += _U32.pack(len(index.entries))
    for query in sorted(index.entries):
        entry = index.entries[query]
        raw = query.encode("utf-8")
        out += _U32.pack(len(raw)) + raw
        out += _U8.pack(_SOURCES.index(entry.source))
        out += _U32.pack(len(entry.docs))
        for doc_id, score in entry.docs:
            raw_id = doc_id.encode("utf-8")
            out += _U16.pack(len(raw_id)) + raw_id
            out += _F64.pack(score)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise FormatError(f"truncated index file at byte {self.pos}")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: struct.Struct):
        return fmt.unpack(self.take(fmt.size))[0]

    def text(self, length_fmt: struct.Struct) -> str:
        raw = self.take(self.unpack(length_fmt))
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"invalid utf-8 at byte {self.pos - len(raw)}") from e


def decode_index(data: bytes) -> FakeIndex:
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise FormatError("not a fake index file (bad magic)")
    version = reader.unpack(_U8)
    if version != VERSION:
        raise FormatError(f"unsupported index version {version} (expected {VERSION})")

    k = reader.unpack(_U32)
    count = reader.unpack(_U32)
    entries: Dict[str, IndexEntry] = {}
    for _ in range(count):
        query = reader.text(_U32)
        source_code = reader.unpack(_U8)
        if source_code >= len(_SOURCES):
            raise FormatError(f"unknown entry source {source_code} for {query!r}")
        docs = []
        for _ in range(reader.unpack(_U32)):
            doc_id = reader.text(_U16)
            docs.append((doc_id, reader.unpack(_F64)))
        if len(docs) > k:
            raise FormatError(f"entry {query!r} holds {len(docs)} docs, more than k={k}")
        try:
            entries[query] = IndexEntry(query, tuple(docs), _SOURCES[source_code])
        except ContractError as e:
            raise FormatError(f"corrupt entry: {e.message}") from e

    if reader.pos != len(data):
        raise FormatError(f"{len(data) - reader.pos} trailing bytes after the last entry")
    return FakeIndex(entries, k)


def save_index(index: FakeIndex, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(encode_index(index))
    logger.info("Saved fake index", path=str(path), entries=len(index))
    return path


def load_index(path: Union[str, Path]) -> FakeIndex:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as e:
        raise FormatError(f"index file not found: {path}") from e
    index = decode_index(data)
    logger.info("Loaded fake index", path=str(path), entries=len(index))
    return index
