from collections import defaultdict
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Set, Tuple, Union

import structlog

from logstore.models import VideoDoc
from mining.terms import tokenize_ordered
from utils.errors import ContractError, IntegrityError, ParseError
from utils.jsonl import read_jsonl

logger = structlog.get_logger()

ScoredDoc = Tuple[str, float]


class DocStore:
    """The video catalog with an inverted term index over title and tags"""

    def __init__(self, docs: Mapping[str, VideoDoc]):
        self.docs: Dict[str, VideoDoc] = dict(docs)
        self._terms: Dict[str, FrozenSet[str]] = {}
        self._postings: Dict[str, Set[str]] = defaultdict(set)
        for doc in self.docs.values():
            terms = frozenset(tokenize_ordered(doc.title)) | frozenset(t for tag in doc.tags for t in tokenize_ordered(tag))
            self._terms[doc.doc_id] = terms
            for term in terms:
                self._postings[term].add(doc.doc_id)

    def __len__(self) -> int:
        return len(self.docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.docs

    def get(self, doc_id: str) -> VideoDoc:
        return self.docs[doc_id]

    def terms(self, doc_id: str) -> FrozenSet[str]:
        return self._terms[doc_id]

    def match(self, query: str, limit: int = 100) -> List[ScoredDoc]:
        """Term-overlap recall: shared-term count descending, doc_id ascending on ties"""
        counts: Dict[str, int] = defaultdict(int)
        for term in set(tokenize_ordered(query)):
            for doc_id in self._postings.get(term, ()):
                counts[doc_id] += 1
        ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        return [(doc_id, float(score)) for doc_id, score in ranked[:limit]]

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "DocStore":
        docs: Dict[str, VideoDoc] = {}
        for lineno, row in read_jsonl(path):
            try:
                doc = VideoDoc.from_dict(row)
            except KeyError as e:
                raise ParseError(f"missing field {e.args[0]!r}", line=lineno, path=str(path)) from e
            except ContractError as e:
                raise ParseError(e.message, line=lineno, path=str(path)) from e
            if doc.doc_id in docs:
                raise IntegrityError(f"duplicate doc_id {doc.doc_id}", doc_id=doc.doc_id, line=lineno)
            docs[doc.doc_id] = doc
        logger.info("Loaded doc store", path=str(path), docs=len(docs))
        return cls(docs)
