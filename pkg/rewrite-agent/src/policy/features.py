import math
from typing import FrozenSet, Sequence

import numpy as np

from mining.terms import normalize_query, tokenize_terms
from policy.candidates import Candidate
from reward.oracle import RewardOracle

FEATURE_NAMES = (
    "bias",
    "is_reject",
    "is_identity",
    "in_vocab",
    "ln_freq_capped",
    "ctr",
    "gain_terms_in_context_frac",
    "char_len_delta_norm",
)
DIM = len(FEATURE_NAMES)

LN_FREQ_CAP = 15.0


def featurize(candidate: Candidate, q: str, ctx_terms: FrozenSet[str], oracle: RewardOracle) -> np.ndarray:
    phi = np.zeros(DIM)
    phi[0] = 1.0
    if candidate.is_reject:
        phi[1] = 1.0
        return phi

    phi[2] = 1.0 if candidate.is_identity else 0.0
    stats = oracle.get(candidate.text)
    if stats is not None:
        phi[3] = 1.0
        phi[4] = min(math.log(stats.freq), LN_FREQ_CAP)
        phi[5] = stats.ctr

    gained = tokenize_terms(candidate.text) - tokenize_terms(q)
    if gained:
        phi[6] = len(gained & ctx_terms) / len(gained)

    base = normalize_query(q)
    total = len(candidate.text) + len(base)
    if total:
        phi[7] = (len(candidate.text) - len(base)) / total
    return phi


def feature_matrix(candidates: Sequence[Candidate], q: str, ctx_terms: FrozenSet[str], oracle: RewardOracle) -> np.ndarray:
    """One row per candidate"""
    return np.vstack([featurize(c, q, ctx_terms, oracle) for c in candidates])
