from typing import Sequence

import numpy as np

from mining.models import TrainingSample
from policy.softmax import PolicyParams, encode_input, probs_of
from reward.oracle import RewardOracle, RewardParams


def expected_objective(
    params: PolicyParams,
    samples: Sequence[TrainingSample],
    oracle: RewardOracle,
    reward_params: RewardParams = RewardParams(),
) -> float:
    """Mean over inputs of E_{Q' ~ pi_theta(.|Q, C_u)}[R(Q')], computed exactly; 0.0 for no inputs"""
    if not samples:
        return 0.0
    values = []
    for sample in samples:
        enc = encode_input(sample.q_orig, sample.context, oracle, reward_params)
        values.append(float(probs_of(params.theta, enc) @ enc.rewards))
    return float(np.mean(values))
