from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import structlog

from mining.models import TrainingSample
from policy.softmax import (
    EncodedInput,
    PolicyDistribution,
    PolicyParams,
    encode_input,
    log_softmax,
    logprob_and_grad_of,
)
from reward.oracle import RewardOracle, RewardParams
from trainer.grpo import GroupRollout
from utils.errors import ContractError, NumericalError, TrainingDataError

logger = structlog.get_logger()

# (encoded input, index of the target candidate)
SftItem = Tuple[EncodedInput, int]


def prepare_sft_batch(
    dataset: Sequence[TrainingSample],
    oracle: RewardOracle,
    reward_params: RewardParams = RewardParams(),
) -> Tuple[List[SftItem], int]:
    """Encode samples once; samples whose target is not a candidate are skipped and counted"""
    batch: List[SftItem] = []
    skipped = 0
    for sample in dataset:
        enc = encode_input(sample.q_orig, sample.context, oracle, reward_params)
        index = enc.index_of(sample.target)
        if index is None:
            skipped += 1
            continue
        batch.append((enc, index))
    if skipped:
        logger.info("Skipped samples with unreachable targets", skipped=skipped, usable=len(batch))
    return batch, skipped


def sft_loss_and_grad_of(theta: np.ndarray, batch: Sequence[SftItem]) -> Tuple[float, np.ndarray]:
    if not batch:
        raise TrainingDataError("no usable training samples")
    loss = 0.0
    grad = np.zeros_like(theta)
    for enc, index in batch:
        logp, g = logprob_and_grad_of(theta, enc, index)
        loss -= logp
        grad -= g
    return loss / len(batch), grad / len(batch)


def sft_loss_and_grad(
    params: PolicyParams,
    dataset: Sequence[TrainingSample],
    oracle: RewardOracle,
) -> Tuple[float, np.ndarray]:
    """Mean negative log-likelihood of the targets and its exact gradient"""
    batch, _ = prepare_sft_batch(dataset, oracle)
    return sft_loss_and_grad_of(params.theta, batch)


def kl_exact(dist_p: PolicyDistribution, dist_q: PolicyDistribution) -> float:
    """D_KL(p || q) over the shared finite support"""
    if [c.text for c in dist_p.candidates] != [c.text for c in dist_q.candidates]:
        raise ContractError("KL needs identical candidate lists")
    p, q = dist_p.probs, dist_q.probs
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def kl_and_grad_of(theta: np.ndarray, ref_logp: np.ndarray, enc: EncodedInput) -> Tuple[float, np.ndarray]:
    """KL(pi_theta || pi_ref) and its gradient sum_k p_k (log(p_k / q_k) - KL) phi_k"""
    logp = log_softmax(enc.features @ theta)
    p = np.exp(logp)
    log_ratio = logp - ref_logp
    kl = float(p @ log_ratio)
    grad = (p * (log_ratio - kl)) @ enc.features
    return kl, grad


@dataclass(frozen=True)
class HybridTerms:
    loss: float
    sft_loss: float
    objective: float
    kl_to_ref: float


def hybrid_terms_and_grad(
    theta: np.ndarray,
    theta_old: np.ndarray,
    theta_ref: np.ndarray,
    sft_batch: Sequence[SftItem],
    rollouts: Sequence[GroupRollout],
    beta: float,
    gamma: float,
) -> Tuple[HybridTerms, np.ndarray]:
    sft_loss, sft_grad = sft_loss_and_grad_of(theta, sft_batch)
    if beta == 0.0 or not rollouts:
        return HybridTerms(sft_loss, sft_loss, 0.0, 0.0), sft_grad

    objective = 0.0
    kl_total = 0.0
    obj_grad = np.zeros_like(theta)
    for rollout in rollouts:
        enc = rollout.input
        old_logp = log_softmax(enc.features @ theta_old)[rollout.indices]
        if not np.allclose(old_logp, rollout.old_logprobs, rtol=0.0, atol=1e-9):
            raise ContractError("rollout was not drawn under params_old")

        logp = log_softmax(enc.features @ theta)
        p = np.exp(logp)
        ratios = np.exp(logp[rollout.indices] - rollout.old_logprobs)
        if not np.all(np.isfinite(ratios)):
            raise NumericalError("non-finite importance ratio")
        # d ratio_i = ratio_i * (phi_i - E_p[phi])
        mean_phi = p @ enc.features
        ratio_grad = (ratios * rollout.advantages) @ (enc.features[rollout.indices] - mean_phi)

        kl, kl_grad = kl_and_grad_of(theta, log_softmax(enc.features @ theta_ref), enc)
        g = rollout.group_size
        objective += float(ratios @ rollout.advantages) / g - gamma * kl
        obj_grad += ratio_grad / g - gamma * kl_grad
        kl_total += kl

    n = len(rollouts)
    objective /= n
    loss = sft_loss - beta * objective
    grad = sft_grad - beta * (obj_grad / n)
    return HybridTerms(loss, sft_loss, objective, kl_total / n), grad


def hybrid_loss_and_grad(
    params: PolicyParams,
    params_old: PolicyParams,
    params_ref: PolicyParams,
    sft_batch: Sequence[SftItem],
    rollouts: Sequence[GroupRollout],
    cfg,
) -> Tuple[float, np.ndarray]:
    """
    L = L_SFT - beta * mean over rollouts of [(1/G) sum_i ratio_i * A_i - gamma * KL(pi_theta || pi_ref)]

    Advantages and pi_old are constants; gradient flows through the ratios and the KL.
    """
    terms, grad = hybrid_terms_and_grad(
        params.theta, params_old.theta, params_ref.theta, sft_batch, rollouts, cfg.beta, cfg.gamma,
    )
    return terms.loss, grad
