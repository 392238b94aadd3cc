import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from mining.models import TrainingSample
from policy.softmax import PolicyParams, log_softmax, probs_of, sample_indices
from reward.oracle import RewardOracle, RewardParams
from trainer.grpo import GroupRollout, grpo_advantages
from trainer.losses import SftItem, hybrid_terms_and_grad, kl_and_grad_of, prepare_sft_batch, sft_loss_and_grad_of
from utils.errors import TrainingDataError, TrainingDivergedError

logger = structlog.get_logger()


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    group_size: int = Field(8, ge=2)
    beta: float = Field(0.5, ge=0)
    gamma: float = Field(0.1, ge=0)
    epsilon_adv: float = Field(1e-8, gt=0)
    learning_rate: float = Field(0.1, gt=0)
    sft_epochs: int = Field(50, ge=0)
    grpo_iters: int = Field(100, ge=0)
    rollout_batch: int = Field(16, ge=1)
    inner_steps: int = Field(1, ge=1)
    seed: int = 0
    reward: RewardParams = RewardParams()


class IterationStats(BaseModel):
    iteration: int
    sft_loss: float
    mean_reward: float
    kl_to_ref: float
    hybrid_loss: float
    index_hit_rate: float


class TrainReport(BaseModel):
    """Training trace; advantages use the population standard deviation"""

    advantage_std: str = "population"
    usable_samples: int = 0
    skipped_samples: int = 0
    sft_curve: List[float] = []
    iterations: List[IterationStats] = []
    uniform_target_prob: float = 0.0
    post_sft_target_prob: float = 0.0
    post_sft_expected_reward: float = 0.0
    final_expected_reward: float = 0.0
    final_kl_to_ref: float = 0.0


def mean_expected_reward(theta: np.ndarray, batch: Sequence[SftItem]) -> float:
    """Exact mean over inputs of E_{Q' ~ pi_theta}[R(Q')]"""
    return float(np.mean([probs_of(theta, enc) @ enc.rewards for enc, _ in batch]))


def mean_target_prob(theta: np.ndarray, batch: Sequence[SftItem]) -> float:
    return float(np.mean([probs_of(theta, enc)[index] for enc, index in batch]))


def mean_kl(theta: np.ndarray, theta_ref: np.ndarray, batch: Sequence[SftItem]) -> float:
    """Exact mean over inputs of KL(pi_theta || pi_ref)"""
    return float(np.mean([kl_and_grad_of(theta, log_softmax(enc.features @ theta_ref), enc)[0] for enc, _ in batch]))


def _check_finite(value: float, theta: np.ndarray, stage: str, report: TrainReport) -> None:
    if not math.isfinite(value) or not np.all(np.isfinite(theta)):
        logger.error("Training diverged", stage=stage, value=value)
        raise TrainingDivergedError(f"non-finite {stage} loss", report=report, stage=stage)


def _rollouts(
    theta_old: np.ndarray,
    batch: Sequence[SftItem],
    rng: np.random.Generator,
    cfg: TrainConfig,
) -> List[GroupRollout]:
    picks = rng.choice(len(batch), size=min(cfg.rollout_batch, len(batch)), replace=False)
    rollouts = []
    for i in sorted(picks):
        enc = batch[i][0]
        logp = log_softmax(enc.features @ theta_old)
        indices = sample_indices(np.exp(logp), rng, cfg.group_size)
        rewards = enc.rewards[indices]
        rollouts.append(GroupRollout(
            input=enc,
            indices=indices,
            rewards=rewards,
            old_logprobs=logp[indices],
            advantages=grpo_advantages(rewards, cfg.epsilon_adv),
        ))
    return rollouts


def _index_hit_rate(rollouts: Sequence[GroupRollout], oracle: RewardOracle) -> float:
    attempts = hits = 0
    for rollout in rollouts:
        for candidate in rollout.draws:
            if candidate.is_rewrite:
                attempts += 1
                hits += oracle.get(candidate.text) is not None
    return hits / attempts if attempts else 0.0


def train(
    dataset: Sequence[TrainingSample],
    oracle: RewardOracle,
    cfg: TrainConfig = TrainConfig(),
    init: Optional[PolicyParams] = None,
) -> Tuple[PolicyParams, TrainReport]:
    """
    Two-stage training: full-batch SFT, then GRPO on the hybrid loss

    pi_ref is frozen at the post-SFT parameters. Each GRPO iteration snapshots
    pi_old, samples a group for every input of a minibatch and takes
    `inner_steps` descent steps on the hybrid loss.

    Raises:
        TrainingDataError: no sample has a reachable target
        TrainingDivergedError: a loss or the parameters became non-finite
    """
    if not dataset:
        raise TrainingDataError("training dataset is empty")
    batch, skipped = prepare_sft_batch(dataset, oracle, cfg.reward)
    if not batch:
        raise TrainingDataError(f"none of the {len(dataset)} samples has a reachable target")

    report = TrainReport(
        usable_samples=len(batch),
        skipped_samples=skipped,
        uniform_target_prob=float(np.mean([1.0 / len(enc.candidates) for enc, _ in batch])),
    )
    theta = (init or PolicyParams.zeros()).theta.copy()
    lr = cfg.learning_rate

    for _ in range(cfg.sft_epochs):
        loss, grad = sft_loss_and_grad_of(theta, batch)
        _check_finite(loss, theta, "sft", report)
        report.sft_curve.append(loss)
        theta = theta - lr * grad
    _check_finite(0.0, theta, "sft", report)

    theta_ref = theta.copy()
    report.post_sft_target_prob = mean_target_prob(theta, batch)
    report.post_sft_expected_reward = mean_expected_reward(theta, batch)
    logger.info("SFT finished", epochs=cfg.sft_epochs, target_prob=report.post_sft_target_prob,
                expected_reward=report.post_sft_expected_reward)

    rng = np.random.default_rng(cfg.seed)
    for iteration in range(cfg.grpo_iters):
        theta_old = theta.copy()
        rollouts = _rollouts(theta_old, batch, rng, cfg)
        terms = None
        for _ in range(cfg.inner_steps):
            terms, grad = hybrid_terms_and_grad(theta, theta_old, theta_ref, batch, rollouts, cfg.beta, cfg.gamma)
            _check_finite(terms.loss, theta, "hybrid", report)
            theta = theta - lr * grad
        _check_finite(terms.loss, theta, "hybrid", report)

        stats = IterationStats(
            iteration=iteration,
            sft_loss=terms.sft_loss,
            mean_reward=float(np.mean([r.rewards.mean() for r in rollouts])),
            kl_to_ref=terms.kl_to_ref,
            hybrid_loss=terms.loss,
            index_hit_rate=_index_hit_rate(rollouts, oracle),
        )
        report.iterations.append(stats)
        if iteration % 10 == 0 or iteration == cfg.grpo_iters - 1:
            logger.debug("GRPO iteration", **stats.model_dump())

    report.final_expected_reward = mean_expected_reward(theta, batch)
    report.final_kl_to_ref = mean_kl(theta, theta_ref, batch)
    logger.info("Training finished", grpo_iters=cfg.grpo_iters, expected_reward=report.final_expected_reward)
    return PolicyParams(theta), report
