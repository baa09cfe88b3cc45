"""Held-out evaluation of a policy on the reward suite."""

from dataclasses import asdict, dataclass
from typing import Dict, Sequence, Union

import numpy as np

from . import diffusion, rewards
from .diffusion import Denoiser, NoiseSchedule, Trajectory
from .errors import ConfigError
from .rewards import Dimension, RewardModel, parse_dimension
from .trainers import DimensionStats, EvalRecord

COLLAPSE_DECLINE = 0.05


def evaluate_trajectories(
    rm: RewardModel,
    trajectories: Sequence[Union[Trajectory, np.ndarray]],
    conditions: Sequence[int],
) -> DimensionStats:
    """Mean and population std of every reward dimension over a sample.

    ``global`` is the weighted mean of raw dimensions per trajectory.
    """
    if not trajectories:
        raise ConfigError("Nothing to evaluate")
    if len(trajectories) != len(conditions):
        raise ConfigError(f"{len(trajectories)} trajectories but {len(conditions)} conditions")

    table = np.array(
        [[rewards.score(rm, y, c).get(dim) for dim in Dimension] for y, c in zip(trajectories, conditions)]
    )
    return {
        dim.value: (float(table[:, j].mean()), float(table[:, j].std()))
        for j, dim in enumerate(Dimension)
    }


def evaluate_policy(
    policy: Denoiser,
    rm: RewardModel,
    prompts: Sequence[int],
    n: int,
    seed: int,
    sched: NoiseSchedule,
    sampler_steps: int = 30,
) -> DimensionStats:
    """Sample n trajectories per prompt and summarize their rewards.

    The sample for (prompt i, draw j) uses its own generator derived from
    ``seed``, so the same seed always evaluates the same noise.
    """
    if n < 1:
        raise ConfigError(f"Need at least one evaluation sample per prompt, got {n}")
    if not prompts:
        raise ConfigError("Prompt set is empty")

    conditions = [c for c in prompts for _ in range(n)]
    gens = [np.random.default_rng(ss) for ss in np.random.SeedSequence(seed).spawn(len(conditions))]
    frames = diffusion.sample_batch(policy, conditions, sched, sampler_steps, gens)
    return evaluate_trajectories(rm, list(frames), conditions)


@dataclass(frozen=True)
class RewardTrend:
    """Peak and end point of one held-out reward curve."""

    peak_step: int
    peak: float
    final_step: int
    final: float

    @property
    def decline(self) -> float:
        """Drop from the peak to the final value, relative to the peak's magnitude."""
        if self.final >= self.peak:
            return 0.0
        return (self.peak - self.final) / max(abs(self.peak), 1e-12)

    def collapsed(self, threshold: float = COLLAPSE_DECLINE) -> bool:
        return self.final_step > self.peak_step and self.decline >= threshold

    def to_dict(self) -> Dict[str, float]:
        return {**asdict(self), "decline": self.decline}


def reward_trend(evals: Sequence[EvalRecord], dimension: str) -> RewardTrend:
    """Locate the peak of the mean ``dimension`` reward along an eval curve.

    The earliest step wins a tie for the peak.
    """
    if not evals:
        raise ConfigError("Reward trend needs at least one evaluation")
    dim = parse_dimension(dimension).value
    means = [record.stats[dim][0] for record in evals]
    best = int(np.argmax(means))
    return RewardTrend(
        peak_step=evals[best].step,
        peak=float(means[best]),
        final_step=evals[-1].step,
        final=float(means[-1]),
    )
