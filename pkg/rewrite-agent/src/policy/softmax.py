"""Log-linear softmax policy over a finite candidate set, with exact gradients"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from logstore.models import UserContext
from mining.filters import context_terms
from policy.candidates import Candidate, candidate_key, generate_candidates
from policy.features import DIM, feature_matrix
from reward.oracle import RewardOracle, RewardParams, candidate_reward
from utils.errors import ConfigError, ContractError


@dataclass(frozen=True, eq=False)
class PolicyParams:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (DIM,):
            raise ContractError(f"theta must have dimension {DIM}, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ContractError("theta has non-finite entries")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls) -> "PolicyParams":
        return cls(np.zeros(DIM))

    def __eq__(self, other) -> bool:
        return isinstance(other, PolicyParams) and np.array_equal(self.theta, other.theta)


@dataclass(frozen=True, eq=False)
class EncodedInput:
    """An input with its candidates, feature rows and per-candidate training rewards"""

    q: str
    context: UserContext
    candidates: Tuple[Candidate, ...]
    features: np.ndarray
    rewards: np.ndarray

    def index_of(self, text: str) -> Optional[int]:
        key = candidate_key(text)
        for i, candidate in enumerate(self.candidates):
            if candidate.text == key:
                return i
        return None


def encode_input(
    q: str,
    ctx: UserContext,
    oracle: RewardOracle,
    reward_params: RewardParams = RewardParams(),
) -> EncodedInput:
    candidates = tuple(generate_candidates(q, ctx, oracle))
    features = feature_matrix(candidates, q, context_terms(ctx), oracle)
    rewards = np.array([candidate_reward(oracle, c.text, q, reward_params) for c in candidates])
    return EncodedInput(q, ctx, candidates, features, rewards)


@dataclass(frozen=True, eq=False)
class PolicyDistribution:
    candidates: Tuple[Candidate, ...]
    probs: np.ndarray

    def argmax(self) -> Candidate:
        # first maximal entry, so ties resolve by candidate order
        return self.candidates[int(np.argmax(self.probs))]

    def prob_of(self, text: str) -> float:
        key = candidate_key(text)
        for candidate, p in zip(self.candidates, self.probs):
            if candidate.text == key:
                return float(p)
        return 0.0


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    return shifted - np.log(np.sum(np.exp(shifted)))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - np.max(logits))
    return shifted / np.sum(shifted)


def probs_of(theta: np.ndarray, enc: EncodedInput) -> np.ndarray:
    return softmax(enc.features @ theta)


def distribution_of(params: PolicyParams, enc: EncodedInput) -> PolicyDistribution:
    return PolicyDistribution(enc.candidates, probs_of(params.theta, enc))


def distribution(params: PolicyParams, q: str, ctx: UserContext, oracle: RewardOracle) -> PolicyDistribution:
    """pi_theta(. | q, ctx)"""
    return distribution_of(params, encode_input(q, ctx, oracle))


def sample_indices(probs: np.ndarray, rng: np.random.Generator, group_size: int) -> np.ndarray:
    if group_size < 2:
        raise ConfigError(f"group_size must be at least 2, got {group_size}")
    return rng.choice(len(probs), size=group_size, replace=True, p=probs)


def sample_group(
    dist: PolicyDistribution,
    rng_seed: Union[int, np.random.Generator, Sequence[int]],
    group_size: int,
) -> List[Candidate]:
    """i.i.d. draws with replacement"""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return [dist.candidates[i] for i in sample_indices(dist.probs, rng, group_size)]


def logprob_and_grad_of(theta: np.ndarray, enc: EncodedInput, index: int) -> Tuple[float, np.ndarray]:
    logp = log_softmax(enc.features @ theta)
    probs = np.exp(logp)
    grad = enc.features[index] - probs @ enc.features
    return float(logp[index]), grad


def logprob_and_grad(
    params: PolicyParams,
    q: str,
    ctx: UserContext,
    oracle: RewardOracle,
    chosen: Union[Candidate, str],
) -> Tuple[float, np.ndarray]:
    """log pi_theta(chosen) and its gradient phi(chosen) - E_pi[phi]"""
    enc = encode_input(q, ctx, oracle)
    text = chosen.text if isinstance(chosen, Candidate) else chosen
    index = enc.index_of(text)
    if index is None:
        raise ContractError(f"{text!r} is not a candidate for {q!r}")
    return logprob_and_grad_of(params.theta, enc, index)


def expected_reward(dist: PolicyDistribution, rewards: Sequence[float]) -> float:
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != dist.probs.shape:
        raise ContractError("rewards must align with the candidate list")
    return float(dist.probs @ rewards)
