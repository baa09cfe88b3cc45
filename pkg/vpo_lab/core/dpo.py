"""Preference pairs and the diffusion-DPO loss.

The likelihood ratio log π_θ(y|c)/π_ref(y|c) of a diffusion model is
replaced by the per-timestep noise-prediction error difference: winner and
loser are corrupted with the same (t, ε), and the loss contrasts how much
better the policy denoises each one compared to the reference.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import diffusion, nn
from .diffusion import Denoiser, NoiseSchedule, Trajectory
from .errors import ConfigError, NonFiniteLossError, ShapeError

logger = logging.getLogger(__name__)

SEED_BOUND = 2 ** 63 - 1


@dataclass(frozen=True)
class PreferencePair:
    """Winner/loser trajectories for one condition, with provenance.

    ``source`` is ``"online:<step>"`` or ``"offline:<dataset id>"``.
    """

    condition: int
    winner: Trajectory
    loser: Trajectory
    source: str
    winner_score: float
    loser_score: float
    winner_index: int = 0
    loser_index: int = 0

    def __post_init__(self):
        if self.winner.frames.shape != self.loser.frames.shape:
            raise ShapeError(
                f"Winner shape {self.winner.frames.shape} differs from loser shape {self.loser.frames.shape}"
            )
        if self.winner_score < self.loser_score:
            raise ConfigError(
                f"Winner score {self.winner_score} is below loser score {self.loser_score}"
            )

    @property
    def gap(self) -> float:
        return self.winner_score - self.loser_score


def generate_candidates(
    policy: Denoiser,
    c: int,
    n: int,
    sched: NoiseSchedule,
    sampler_steps: int,
    rng: np.random.Generator,
    shared_prior: bool = False,
) -> List[Trajectory]:
    """Draw n independent samples for condition c, one RNG substream each.

    With ``shared_prior`` all candidates start from the same x_T and only the
    ancestral noise differs.
    """
    if n < 2:
        raise ConfigError(f"Need at least 2 candidates, got {n}")
    seeds = rng.integers(0, SEED_BOUND, size=n)
    gens = [np.random.default_rng(int(s)) for s in seeds]

    prior = None
    if shared_prior:
        head_rng = np.random.default_rng(int(rng.integers(0, SEED_BOUND)))
        head = head_rng.standard_normal(policy.frame_shape)
        prior = np.repeat(head[None], n, axis=0)

    frames = diffusion.sample_batch(policy, [c] * n, sched, sampler_steps, gens, prior=prior)
    return [Trajectory(frames=f, condition=c, seed=int(s)) for f, s in zip(frames, seeds)]


def select_pair(
    candidates: Sequence[Trajectory],
    scores: Sequence[float],
    source: str = "online:0",
) -> Optional[PreferencePair]:
    """Winner = argmax, loser = argmin (lowest index on ties).

    Returns None when every score is equal: the set carries no preference.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if len(candidates) != len(scores):
        raise ShapeError(f"{len(candidates)} candidates but {len(scores)} scores")
    if len(scores) < 2:
        raise ConfigError(f"Need at least 2 candidates, got {len(scores)}")
    if not np.all(np.isfinite(scores)):
        raise ConfigError("Candidate scores must be finite")

    w = int(np.argmax(scores))
    lo = int(np.argmin(scores))
    if scores[w] == scores[lo]:
        return None
    return PreferencePair(
        condition=candidates[w].condition,
        winner=candidates[w],
        loser=candidates[lo],
        source=source,
        winner_score=float(scores[w]),
        loser_score=float(scores[lo]),
        winner_index=w,
        loser_index=lo,
    )


def dpo_objective(err_policy_w: float, err_ref_w: float, err_policy_l: float, err_ref_l: float, beta: float):
    """Scalar surrogate: h = −(β/2)[(e_θw − e_rw) − (e_θl − e_rl)], loss = softplus(−h).

    Returns:
        Tuple of (loss, h)
    """
    h = -(beta / 2.0) * ((err_policy_w - err_ref_w) - (err_policy_l - err_ref_l))
    return float(np.logaddexp(0.0, -h)), float(h)


@dataclass
class DpoResult:
    loss: float
    h: float
    t: int
    tape: nn.GradientTape
    errors: tuple


def dpo_loss(
    policy: Denoiser,
    reference: Denoiser,
    pair: PreferencePair,
    beta: float,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    tape: Optional[nn.GradientTape] = None,
    weight: float = 1.0,
) -> DpoResult:
    """Diffusion-DPO loss of one pair and its gradient w.r.t. the policy.

    A single t ~ U[0, T) and ε ~ N(0, I) are shared by winner and loser and
    by policy and reference. Gradients flow only through the policy's noise
    predictions; ``weight`` scales the accumulated gradient (for averaging
    over several pairs into one tape).
    """
    if beta < 0:
        raise ConfigError(f"DPO temperature must be non-negative, got {beta}")

    t = int(rng.integers(0, sched.T))
    eps = rng.standard_normal(pair.winner.frames.shape)
    x_w = diffusion.forward_diffuse(pair.winner, t, eps, sched)
    x_l = diffusion.forward_diffuse(pair.loser, t, eps, sched)
    x_t = np.stack([x_w, x_l])

    inputs = diffusion.denoiser_input(policy, x_t, t, pair.condition)
    n = eps.size
    target = eps.reshape(-1)

    ref_out = nn.forward(reference.net, diffusion.denoiser_input(reference, x_t, t, pair.condition))
    pol_out = nn.forward(policy.net, inputs)

    resid_pol = target - pol_out
    err_pol = (resid_pol ** 2).sum(axis=1) / n
    err_ref = ((target - ref_out) ** 2).sum(axis=1) / n

    loss, h = dpo_objective(err_pol[0], err_ref[0], err_pol[1], err_ref[1], beta)
    if not (np.isfinite(h) and np.isfinite(loss)):
        raise NonFiniteLossError(
            f"DPO margin is not finite at t={t}: policy errors {err_pol.tolist()}, "
            f"reference errors {err_ref.tolist()}, beta={beta}"
        )

    # dloss/dh = -sigmoid(-h); dh/de_w = -β/2, dh/de_l = +β/2; de/dpred = -2 r / n
    dloss_dh = -0.5 * (1.0 - np.tanh(0.5 * h))
    dh_de = np.array([-beta / 2.0, beta / 2.0])
    upstream = weight * dloss_dh * dh_de[:, None] * (-2.0 * resid_pol / n)

    tape = nn.backward(policy.net, inputs, upstream, tape=tape)
    return DpoResult(loss=loss, h=h, t=t, tape=tape, errors=(*err_pol.tolist(), *err_ref.tolist()))
