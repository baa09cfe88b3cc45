"""Online VPO and offline diffusion-DPO training loops.

Online VPO, per optimization step:

1. sample N candidates for the next prompt from the current policy
2. score them with the reward model and pick (argmax, argmin) as the pair
3. take one DPO step against the reference model
4. every K steps replace the reference with a snapshot of the policy

Offline DPO runs the same loss over a fixed, pre-collected set of pairs with
a reference that never changes.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import diffusion, nn, rewards
from .diffusion import Denoiser, NoiseSchedule
from .dpo import PreferencePair, dpo_loss, generate_candidates, select_pair
from .errors import ConfigError, DegeneratePolicyError
from .rewards import Dimension, Feedback, RewardModel, parse_dimension, parse_feedback

logger = logging.getLogger(__name__)

DimensionStats = Dict[str, Tuple[float, float]]
Evaluator = Callable[[Denoiser], DimensionStats]


@dataclass
class VpoConfig:
    """Hyperparameters shared by the online, offline and ReFL trainers.

    ``k_interval=None`` disables curriculum reference updates. The default
    learning rate is far below ``AdamState``'s: preference updates at 1e-3
    overshoot and degrade the target reward within a few dozen steps.
    """

    n_candidates: int = 4
    k_interval: Optional[int] = 200
    beta: float = 1.0
    steps: int = 500
    batch_size: int = 1
    sampler_steps: int = 30
    dimension: str = Dimension.TEMPORAL_CONSISTENCY.value
    feedback: str = Feedback.TRAJECTORY.value
    learning_rate: float = 1e-5
    seed: int = 0
    eval_interval: int = 50
    skip_window: int = 50
    shared_prior: bool = False
    refl_t_fraction: float = 0.3

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ConfigError(f"n_candidates must be >= 2, got {self.n_candidates}")
        if self.k_interval is not None and self.k_interval < 1:
            raise ConfigError(f"k_interval must be >= 1 (or None), got {self.k_interval}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.sampler_steps < 1:
            raise ConfigError(f"sampler_steps must be >= 1, got {self.sampler_steps}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.eval_interval < 1:
            raise ConfigError(f"eval_interval must be >= 1, got {self.eval_interval}")
        if self.skip_window < 1:
            raise ConfigError(f"skip_window must be >= 1, got {self.skip_window}")
        if not 0.0 < self.refl_t_fraction <= 1.0:
            raise ConfigError(f"refl_t_fraction must lie in (0, 1], got {self.refl_t_fraction}")
        self.dimension = parse_dimension(self.dimension).value
        self.feedback = parse_feedback(self.feedback).value


@dataclass
class StepRecord:
    step: int
    loss: float
    candidate_means: Dict[str, float]
    gap: float
    ref_updated: bool = False
    skipped: bool = False
    pairs: int = 0


@dataclass
class EvalRecord:
    step: int
    stats: DimensionStats


@dataclass
class TrainRunMetrics:
    """Per-step training records plus periodic held-out evaluations."""

    method: str
    steps: List[StepRecord] = field(default_factory=list)
    evals: List[EvalRecord] = field(default_factory=list)
    reference_updates: List[int] = field(default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.steps])

    def final_eval(self) -> Optional[EvalRecord]:
        return self.evals[-1] if self.evals else None

    def eval_at(self, step: int) -> Optional[EvalRecord]:
        for record in self.evals:
            if record.step == step:
                return record
        return None


@dataclass
class RunStreams:
    """Independent RNG streams of one training run."""

    candidates: np.random.Generator
    loss: np.random.Generator
    shuffle: np.random.Generator


def run_streams(seed: int) -> RunStreams:
    cand_ss, loss_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(3)
    return RunStreams(
        candidates=np.random.default_rng(cand_ss),
        loss=np.random.default_rng(loss_ss),
        shuffle=np.random.default_rng(shuffle_ss),
    )


def _candidate_means(vectors: Sequence[rewards.RewardVector]) -> Dict[str, float]:
    return {dim.value: float(np.mean([v.get(dim) for v in vectors])) for dim in Dimension}


def _average_means(means: Sequence[Dict[str, float]]) -> Dict[str, float]:
    if not means:
        return {dim.value: float("nan") for dim in Dimension}
    return {k: float(np.mean([m[k] for m in means])) for k in means[0]}


def maybe_evaluate(
    metrics: TrainRunMetrics,
    evaluator: Optional[Evaluator],
    policy: Denoiser,
    step: int,
    cfg: VpoConfig,
) -> None:
    if evaluator is None:
        return
    if step == 0 or step % cfg.eval_interval == 0 or step == cfg.steps:
        metrics.evals.append(EvalRecord(step=step, stats=evaluator(policy)))


def _dpo_update(
    policy: Denoiser,
    reference: Denoiser,
    pairs: Sequence[PreferencePair],
    cfg: VpoConfig,
    sched: NoiseSchedule,
    streams: RunStreams,
    tape: nn.GradientTape,
    optimizer: nn.AdamState,
) -> List[float]:
    losses = []
    for pair in pairs:
        result = dpo_loss(policy, reference, pair, cfg.beta, sched, streams.loss, tape=tape, weight=1.0 / len(pairs))
        losses.append(result.loss)
    nn.adam_step(policy.net, tape, optimizer)
    return losses


def train_online_vpo(
    policy: Denoiser,
    reward_model: RewardModel,
    prompts: Sequence[int],
    cfg: VpoConfig,
    sched: NoiseSchedule,
    evaluator: Optional[Evaluator] = None,
    on_step: Optional[Callable[[StepRecord], None]] = None,
    method: str = "online_vpo",
) -> Tuple[Denoiser, TrainRunMetrics]:
    """Online preference optimization with curriculum reference updates.

    The reference starts as a clone of ``policy``; every ``k_interval`` steps
    it is replaced by a fresh clone. Prompts are visited round-robin. The
    policy is updated in place and returned with the run metrics.

    Raises:
        DegeneratePolicyError: ``skip_window`` consecutive steps without any
            informative pair
    """
    if not prompts:
        raise ConfigError("Prompt set is empty")
    rm = reward_model.with_dimension(cfg.dimension)
    reference = diffusion.clone_denoiser(policy)
    optimizer = nn.AdamState.for_net(policy.net, lr=cfg.learning_rate)
    tape = nn.GradientTape.for_net(policy.net)
    streams = run_streams(cfg.seed)
    metrics = TrainRunMetrics(method=method)

    maybe_evaluate(metrics, evaluator, policy, 0, cfg)
    cursor = 0
    consecutive_skips = 0
    for step in range(1, cfg.steps + 1):
        pairs = []
        means = []
        for _ in range(cfg.batch_size):
            c = prompts[cursor % len(prompts)]
            cursor += 1
            candidates = generate_candidates(
                policy, c, cfg.n_candidates, sched, cfg.sampler_steps, streams.candidates, cfg.shared_prior
            )
            vectors, selection = rewards.score_candidates(rm, candidates, c, feedback=cfg.feedback)
            means.append(_candidate_means(vectors))
            pair = select_pair(candidates, selection, source=f"online:{step}")
            if pair is not None:
                pairs.append(pair)

        if pairs:
            losses = _dpo_update(policy, reference, pairs, cfg, sched, streams, tape, optimizer)
            consecutive_skips = 0
        else:
            losses = []
            consecutive_skips += 1
            logger.warning("Step %d: all candidate scores equal, no pair to learn from", step)
            if consecutive_skips >= cfg.skip_window:
                raise DegeneratePolicyError(
                    f"{consecutive_skips} consecutive steps produced no informative pair (last step {step})"
                )

        ref_updated = cfg.k_interval is not None and step % cfg.k_interval == 0
        if ref_updated:
            reference = diffusion.clone_denoiser(policy)
            metrics.reference_updates.append(step)
            logger.info("Step %d: reference model refreshed from policy", step)

        record = StepRecord(
            step=step,
            loss=float(np.mean(losses)) if losses else float("nan"),
            candidate_means=_average_means(means),
            gap=float(np.mean([p.gap for p in pairs])) if pairs else 0.0,
            ref_updated=ref_updated,
            skipped=not pairs,
            pairs=len(pairs),
        )
        metrics.steps.append(record)
        if on_step is not None:
            on_step(record)
        maybe_evaluate(metrics, evaluator, policy, step, cfg)

    return policy, metrics


@dataclass(frozen=True)
class OfflineDataset:
    """Pre-collected preference pairs; never re-scored after construction."""

    dataset_id: str
    pairs: Tuple[PreferencePair, ...]
    candidate_means: Tuple[Dict[str, float], ...]

    def __len__(self) -> int:
        return len(self.pairs)


def build_offline_dataset(
    policy: Denoiser,
    reward_model: RewardModel,
    prompts: Sequence[int],
    n_pairs: int,
    cfg: VpoConfig,
    sched: NoiseSchedule,
    dataset_id: Optional[str] = None,
) -> OfflineDataset:
    """Collect pairs from a frozen policy with the online pipeline.

    Uses the same candidate stream layout as ``train_online_vpo`` so the first
    pair matches the online trainer's first pair under the same seed.
    """
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {n_pairs}")
    if not prompts:
        raise ConfigError("Prompt set is empty")
    dataset_id = dataset_id or f"seed{cfg.seed}-n{n_pairs}"
    rm = reward_model.with_dimension(cfg.dimension)
    streams = run_streams(cfg.seed)

    pairs = []
    means = []
    cursor = 0
    consecutive_skips = 0
    while len(pairs) < n_pairs:
        c = prompts[cursor % len(prompts)]
        cursor += 1
        candidates = generate_candidates(
            policy, c, cfg.n_candidates, sched, cfg.sampler_steps, streams.candidates, cfg.shared_prior
        )
        vectors, selection = rewards.score_candidates(rm, candidates, c, feedback=cfg.feedback)
        pair = select_pair(candidates, selection, source=f"offline:{dataset_id}")
        if pair is None:
            consecutive_skips += 1
            if consecutive_skips >= cfg.skip_window:
                raise DegeneratePolicyError(
                    f"Frozen policy produced {consecutive_skips} uninformative candidate sets in a row"
                )
            continue
        consecutive_skips = 0
        pairs.append(pair)
        means.append(_candidate_means(vectors))

    logger.info("Collected %d offline preference pairs (%s)", len(pairs), dataset_id)
    return OfflineDataset(dataset_id=dataset_id, pairs=tuple(pairs), candidate_means=tuple(means))


def train_offline_dpo(
    policy: Denoiser,
    dataset: OfflineDataset,
    cfg: VpoConfig,
    sched: NoiseSchedule,
    evaluator: Optional[Evaluator] = None,
    on_step: Optional[Callable[[StepRecord], None]] = None,
    method: str = "offline_dpo",
) -> Tuple[Denoiser, TrainRunMetrics]:
    """DPO epochs over fixed pairs against a frozen reference.

    Pairs are reshuffled at the start of every epoch; ``cfg.steps`` optimizer
    steps are taken in total. ``cfg.k_interval`` is ignored.
    """
    if not len(dataset):
        raise ConfigError("Offline preference dataset is empty")
    reference = diffusion.clone_denoiser(policy)
    optimizer = nn.AdamState.for_net(policy.net, lr=cfg.learning_rate)
    tape = nn.GradientTape.for_net(policy.net)
    streams = run_streams(cfg.seed)
    metrics = TrainRunMetrics(method=method)

    maybe_evaluate(metrics, evaluator, policy, 0, cfg)
    order: List[int] = []
    for step in range(1, cfg.steps + 1):
        batch = []
        for _ in range(min(cfg.batch_size, len(dataset))):
            if not order:
                order = streams.shuffle.permutation(len(dataset)).tolist()
            batch.append(order.pop(0))

        pairs = [dataset.pairs[i] for i in batch]
        losses = _dpo_update(policy, reference, pairs, cfg, sched, streams, tape, optimizer)
        record = StepRecord(
            step=step,
            loss=float(np.mean(losses)),
            candidate_means=_average_means([dataset.candidate_means[i] for i in batch]),
            gap=float(np.mean([p.gap for p in pairs])),
            pairs=len(pairs),
        )
        metrics.steps.append(record)
        if on_step is not None:
            on_step(record)
        maybe_evaluate(metrics, evaluator, policy, step, cfg)

    return policy, metrics
