from typing import List

from logstore.docstore import DocStore, ScoredDoc

RECALL_LIMIT = 100


def traditional_recall(q: str, docstore: DocStore, limit: int = RECALL_LIMIT) -> List[ScoredDoc]:
    """Term-overlap baseline retrieval: shared-term count descending, doc_id ascending"""
    return docstore.match(q, limit)
