"""Reward feedback learning (ReFL) baseline.

Runs the sampler down to a random low-noise timestep t, predicts the clean
trajectory in one shot and ascends the reward of that prediction. The
gradient passes through the clean-sample prediction and the final denoiser
call only; x_t itself is treated as a constant.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from . import diffusion, nn, rewards
from .diffusion import Denoiser, NoiseSchedule
from .errors import ConfigError, NonFiniteLossError
from .rewards import RewardModel
from .trainers import Evaluator, StepRecord, TrainRunMetrics, VpoConfig, maybe_evaluate, run_streams

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class ReflStepResult:
    loss: float
    reward: float
    t: int
    x0_hat: np.ndarray


def default_t_range(sched: NoiseSchedule, fraction: float = 0.3) -> Tuple[int, int]:
    """The low-noise end of the chain: t in [0, ceil(fraction*T) - 1]."""
    return 0, max(0, math.ceil(fraction * sched.T) - 1)


def _as_objective(reward: Union[RewardModel, Objective], c: int) -> Objective:
    if isinstance(reward, RewardModel):
        return lambda frames: rewards.reward_and_grad(reward, frames, c)
    return reward


def _feedback_reward(rm: RewardModel, feedback: str, c: int) -> Union[RewardModel, Objective]:
    if rewards.parse_feedback(feedback) is rewards.Feedback.PER_FRAME:
        return lambda frames: rewards.frame_quality_and_grad(rm, frames, c)
    return rm


def refl_loss(
    policy: Denoiser,
    objective: Objective,
    c: int,
    sched: NoiseSchedule,
    t: int,
    x_t: np.ndarray,
    tape: Optional[nn.GradientTape] = None,
) -> Tuple[float, np.ndarray, nn.GradientTape]:
    """loss = −r(x0̂) at a fixed x_t, with its gradient w.r.t. the policy.

    Returns:
        Tuple of (loss, x0_hat, tape)
    """
    inputs = diffusion.denoiser_input(policy, x_t, t, c)
    eps_hat = nn.forward(policy.net, inputs).reshape(policy.frame_shape)
    x0_hat = diffusion.x0_from_noise(x_t, t, eps_hat, sched)

    reward, grad_x0 = objective(x0_hat)
    loss = -float(reward)
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"ReFL reward is {reward} at t={t}, condition {c}")

    ab = sched.alpha_bar[t]
    # x0_hat = (x_t - sqrt(1-ab) eps_hat) / sqrt(ab)
    upstream = grad_x0 * np.sqrt(1.0 - ab) / np.sqrt(ab)
    tape = nn.backward(policy.net, inputs, upstream.reshape(-1), tape=tape)
    return loss, x0_hat, tape


def refl_step(
    policy: Denoiser,
    reward: Union[RewardModel, Objective],
    c: int,
    sched: NoiseSchedule,
    t_range: Tuple[int, int],
    optimizer: nn.AdamState,
    rng: np.random.Generator,
    sampler_steps: int = 30,
    tape: Optional[nn.GradientTape] = None,
) -> ReflStepResult:
    """One ReFL update on condition c. The policy is updated in place."""
    lo, hi = t_range
    if not 0 <= lo <= hi < sched.T:
        raise ConfigError(f"ReFL t_range {t_range} must lie inside [0, {sched.T})")

    t = int(rng.integers(lo, hi + 1))
    x_t = diffusion.denoise_to(policy, c, sched, sampler_steps, t, rng)
    loss, x0_hat, tape = refl_loss(policy, _as_objective(reward, c), c, sched, t, x_t, tape=tape)
    nn.adam_step(policy.net, tape, optimizer)
    return ReflStepResult(loss=loss, reward=-loss, t=t, x0_hat=x0_hat)


def train_refl(
    policy: Denoiser,
    reward_model: RewardModel,
    prompts: Sequence[int],
    cfg: VpoConfig,
    sched: NoiseSchedule,
    evaluator: Optional[Evaluator] = None,
    on_step: Optional[Callable[[StepRecord], None]] = None,
    method: str = "refl",
) -> Tuple[Denoiser, TrainRunMetrics]:
    """ReFL on the configured reward dimension (or the per-frame scorer), prompts visited round-robin."""
    if not prompts:
        raise ConfigError("Prompt set is empty")
    rm = reward_model.with_dimension(cfg.dimension)
    t_range = default_t_range(sched, cfg.refl_t_fraction)
    optimizer = nn.AdamState.for_net(policy.net, lr=cfg.learning_rate)
    tape = nn.GradientTape.for_net(policy.net)
    streams = run_streams(cfg.seed)
    metrics = TrainRunMetrics(method=method)

    maybe_evaluate(metrics, evaluator, policy, 0, cfg)
    for step in range(1, cfg.steps + 1):
        c = prompts[(step - 1) % len(prompts)]
        reward = _feedback_reward(rm, cfg.feedback, c)
        result = refl_step(policy, reward, c, sched, t_range, optimizer, streams.candidates, cfg.sampler_steps, tape)
        record = StepRecord(
            step=step,
            loss=result.loss,
            candidate_means=rewards.score(rm, result.x0_hat, c).as_dict(),
            gap=0.0,
            pairs=0,
        )
        metrics.steps.append(record)
        if on_step is not None:
            on_step(record)
        maybe_evaluate(metrics, evaluator, policy, step, cfg)

    logger.info("ReFL finished %d steps on %s", cfg.steps, cfg.dimension)
    return policy, metrics

