from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from policy.candidates import Candidate
from policy.softmax import EncodedInput
from utils.errors import ContractError


def grpo_advantages(rewards: Sequence[float], epsilon_adv: float = 1e-8) -> np.ndarray:
    """Group-relative advantages (R_i - mean) / (std + eps), population std"""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ContractError(f"advantages need a group of at least 2 rewards, got {r.size}")
    centered = r - r.mean()
    std = r.std()
    if std == 0.0:
        return np.zeros_like(r)
    return centered / (std + epsilon_adv)


@dataclass(frozen=True, eq=False)
class GroupRollout:
    """G draws for one input under the snapshot policy, with their rewards and advantages"""

    input: EncodedInput
    indices: np.ndarray
    rewards: np.ndarray
    old_logprobs: np.ndarray
    advantages: np.ndarray

    def __post_init__(self):
        g = len(self.indices)
        if not (len(self.rewards) == len(self.old_logprobs) == len(self.advantages) == g):
            raise ContractError("rollout arrays must all have group_size entries")

    @property
    def group_size(self) -> int:
        return len(self.indices)

    @property
    def draws(self) -> Tuple[Candidate, ...]:
        return tuple(self.input.candidates[i] for i in self.indices)
