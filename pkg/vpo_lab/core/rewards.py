"""Synthetic multi-dimensional trajectory rewards and ranking metrics.

Four reward dimensions score a trajectory against its class template:

- temporal_consistency: negative mean squared second difference
- dynamic_degree: mean inter-frame displacement (softened norm)
- visual_quality: negative mean squared distance to the template frame
- alignment: normalized cross-correlation with the template

All four are differentiable in the trajectory values, which ReFL needs.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .diffusion import Trajectory
from .errors import ConfigError, ShapeError
from .toy_data import ClassSpec, templates_for

logger = logging.getLogger(__name__)

DYNAMIC_EPS = 1e-8
NCC_FLOOR = 1e-12
SPREAD_RTOL = 1e-12


class Dimension(str, Enum):
    VISUAL_QUALITY = "visual_quality"
    TEMPORAL_CONSISTENCY = "temporal_consistency"
    DYNAMIC_DEGREE = "dynamic_degree"
    ALIGNMENT = "alignment"
    GLOBAL = "global"


RAW_DIMENSIONS = (
    Dimension.VISUAL_QUALITY,
    Dimension.TEMPORAL_CONSISTENCY,
    Dimension.DYNAMIC_DEGREE,
    Dimension.ALIGNMENT,
)


def parse_dimension(value: Union[str, Dimension]) -> Dimension:
    try:
        return Dimension(value)
    except ValueError:
        names = ", ".join(d.value for d in Dimension)
        raise ConfigError(f"Unknown reward dimension '{value}' (expected one of {names})") from None


class Feedback(str, Enum):
    """Where the trainers' selection signal comes from."""

    TRAJECTORY = "trajectory"
    PER_FRAME = "per_frame"


def parse_feedback(value: Union[str, Feedback]) -> Feedback:
    try:
        return Feedback(value)
    except ValueError:
        names = ", ".join(f.value for f in Feedback)
        raise ConfigError(f"Unknown feedback source '{value}' (expected one of {names})") from None


@dataclass(frozen=True)
class RewardVector:
    visual_quality: float
    temporal_consistency: float
    dynamic_degree: float
    alignment: float
    global_: float

    def get(self, dim: Union[str, Dimension]) -> float:
        dim = parse_dimension(dim)
        if dim is Dimension.GLOBAL:
            return self.global_
        return getattr(self, dim.value)

    def as_dict(self) -> Dict[str, float]:
        return {dim.value: self.get(dim) for dim in Dimension}


@dataclass
class RewardModel:
    """Scores trajectories against noiseless class templates.

    Args:
        templates: Array (C, F, D) of noiseless templates indexed by class
        dimension: Selection criterion used by the trainers
        weights: Per-dimension weights for the global aggregate
    """

    templates: np.ndarray
    dimension: Dimension = Dimension.TEMPORAL_CONSISTENCY
    weights: Dict[Dimension, float] = field(default_factory=lambda: {d: 1.0 for d in RAW_DIMENSIONS})

    def __post_init__(self):
        self.templates = np.asarray(self.templates, dtype=np.float64)
        if self.templates.ndim != 3:
            raise ShapeError(f"Templates must be (C, F, D), got {self.templates.shape}")
        self.dimension = parse_dimension(self.dimension)
        self.weights = {parse_dimension(k): float(v) for k, v in self.weights.items()}
        if (
            set(self.weights) != set(RAW_DIMENSIONS)
            or any(w < 0 for w in self.weights.values())
            or sum(self.weights.values()) <= 0
        ):
            raise ConfigError("Global weights need one non-negative entry per raw dimension with positive sum")

    @classmethod
    def from_specs(
        cls,
        specs: Sequence[ClassSpec],
        n_frames: int,
        dims: int,
        dimension: Union[str, Dimension] = Dimension.TEMPORAL_CONSISTENCY,
    ) -> "RewardModel":
        return cls(templates=templates_for(specs, n_frames, dims), dimension=parse_dimension(dimension))

    def with_dimension(self, dimension: Union[str, Dimension]) -> "RewardModel":
        return RewardModel(templates=self.templates, dimension=parse_dimension(dimension), weights=dict(self.weights))

    def template(self, c: int) -> np.ndarray:
        if not 0 <= c < len(self.templates):
            raise ShapeError(f"Condition {c} outside [0, {len(self.templates)})")
        return self.templates[c]

    def global_weights(self) -> np.ndarray:
        w = np.array([self.weights[d] for d in RAW_DIMENSIONS])
        return w / w.sum()


# ============================================================================
# REWARD DIMENSIONS (value and gradient w.r.t. frames)
# ============================================================================

def _check_frames(y: np.ndarray, template: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 3:
        raise ShapeError(f"Reward needs an F x D trajectory with F >= 3, got shape {y.shape}")
    if y.shape != template.shape:
        raise ShapeError(f"Trajectory shape {y.shape} does not match template shape {template.shape}")
    return y


def temporal_consistency(y: np.ndarray) -> Tuple[float, np.ndarray]:
    s = y[2:] - 2.0 * y[1:-1] + y[:-2]
    m = len(s)
    value = -float((s ** 2).sum(axis=1).mean())
    gs = -2.0 * s / m
    grad = np.zeros_like(y)
    grad[2:] += gs
    grad[1:-1] -= 2.0 * gs
    grad[:-2] += gs
    return value, grad


def dynamic_degree(y: np.ndarray) -> Tuple[float, np.ndarray]:
    d = y[1:] - y[:-1]
    m = len(d)
    soft = np.sqrt((d ** 2).sum(axis=1) + DYNAMIC_EPS ** 2)
    value = float((soft - DYNAMIC_EPS).mean())
    gd = d / soft[:, None] / m
    grad = np.zeros_like(y)
    grad[1:] += gd
    grad[:-1] -= gd
    return value, grad


def visual_quality(y: np.ndarray, template: np.ndarray) -> Tuple[float, np.ndarray]:
    diff = y - template
    value = -float((diff ** 2).sum(axis=1).mean())
    return value, -2.0 * diff / len(y)


def alignment(y: np.ndarray, template: np.ndarray) -> Tuple[float, np.ndarray]:
    a = y - y.mean()
    b = template - template.mean()
    na = np.sqrt((a ** 2).sum())
    nb = np.sqrt((b ** 2).sum())
    if na < NCC_FLOOR or nb < NCC_FLOOR:
        return 0.0, np.zeros_like(y)
    value = float((a * b).sum() / (na * nb))
    # a and b are centred, so this gradient already has zero mean
    grad = b / (na * nb) - value * a / na ** 2
    return float(np.clip(value, -1.0, 1.0)), grad


_DIMENSION_FNS = {
    Dimension.VISUAL_QUALITY: lambda y, tpl: visual_quality(y, tpl),
    Dimension.TEMPORAL_CONSISTENCY: lambda y, tpl: temporal_consistency(y),
    Dimension.DYNAMIC_DEGREE: lambda y, tpl: dynamic_degree(y),
    Dimension.ALIGNMENT: lambda y, tpl: alignment(y, tpl),
}


def _frames(y: Union[Trajectory, np.ndarray]) -> np.ndarray:
    return y.frames if isinstance(y, Trajectory) else np.asarray(y, dtype=np.float64)


def raw_scores(rm: RewardModel, y: Union[Trajectory, np.ndarray], c: int) -> np.ndarray:
    """The four raw dimension values, in RAW_DIMENSIONS order."""
    template = rm.template(c)
    frames = _check_frames(_frames(y), template)
    return np.array([_DIMENSION_FNS[d](frames, template)[0] for d in RAW_DIMENSIONS])


def score(rm: RewardModel, y: Union[Trajectory, np.ndarray], c: int) -> RewardVector:
    """Score one trajectory. ``global`` is the weighted mean of raw values."""
    raw = raw_scores(rm, y, c)
    return RewardVector(*raw.tolist(), global_=float(raw @ rm.global_weights()))


def zscore_global(raw: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Set-level global score: z-score each dimension over the set, then average.

    A dimension with zero spread across the set contributes 0. Spread within
    ``SPREAD_RTOL`` of the column magnitude counts as zero, so rounding noise
    in a dimension that is constant over the set never gets z-scored.
    """
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    spread = std > SPREAD_RTOL * np.maximum(1.0, np.abs(mean))
    safe = np.where(spread, std, 1.0)
    z = np.where(spread, (raw - mean) / safe, 0.0)
    return z @ weights


def score_candidates(
    rm: RewardModel,
    candidates: Sequence[Union[Trajectory, np.ndarray]],
    c: int,
    feedback: Union[str, Feedback] = Feedback.TRAJECTORY,
) -> Tuple[List[RewardVector], np.ndarray]:
    """Score a candidate set.

    Args:
        rm: Reward model; ``rm.dimension`` is the selection criterion
        candidates: Trajectories sharing condition ``c``
        c: Condition index
        feedback: ``per_frame`` selects with the order-blind frame scorer
            instead of ``rm.dimension``; the reward vectors are unaffected

    Returns:
        Tuple of (per-candidate RewardVectors with set-normalized ``global``,
        selection scores)
    """
    if not candidates:
        raise ConfigError("Candidate set is empty")
    feedback = parse_feedback(feedback)
    raw = np.stack([raw_scores(rm, y, c) for y in candidates])
    global_scores = zscore_global(raw, rm.global_weights())
    vectors = [RewardVector(*row.tolist(), global_=float(g)) for row, g in zip(raw, global_scores)]
    if feedback is Feedback.PER_FRAME:
        selection = np.array([frame_quality_score(rm, y, c) for y in candidates])
    else:
        selection = np.array([v.get(rm.dimension) for v in vectors])
    return vectors, selection


def reward_and_grad(
    rm: RewardModel,
    frames: np.ndarray,
    c: int,
    dimension: Optional[Union[str, Dimension]] = None,
) -> Tuple[float, np.ndarray]:
    """Differentiable reward on one dimension (global = weighted raw mean)."""
    dim = parse_dimension(dimension or rm.dimension)
    template = rm.template(c)
    frames = _check_frames(frames, template)
    if dim is not Dimension.GLOBAL:
        return _DIMENSION_FNS[dim](frames, template)

    value = 0.0
    grad = np.zeros_like(frames)
    for w, d in zip(rm.global_weights(), RAW_DIMENSIONS):
        v, g = _DIMENSION_FNS[d](frames, template)
        value += w * v
        grad += w * g
    return value, grad


def frame_quality_score(rm: RewardModel, y: Union[Trajectory, np.ndarray], c: int) -> float:
    """Order-blind per-frame scorer, the analogue of an image preference model.

    Each frame is scored independently by its squared distance to the nearest
    template frame; shuffling frames leaves the score unchanged.
    """
    return frame_quality_and_grad(rm, _frames(y), c)[0]


def frame_quality_and_grad(rm: RewardModel, frames: np.ndarray, c: int) -> Tuple[float, np.ndarray]:
    """``frame_quality_score`` and its gradient; the nearest template frame is held fixed."""
    template = rm.template(c)
    frames = _check_frames(frames, template)
    d2 = ((frames[:, None, :] - template[None, :, :]) ** 2).sum(axis=2)
    nearest = template[d2.argmin(axis=1)]
    return -float(d2.min(axis=1).mean()), -2.0 * (frames - nearest) / len(frames)


# ============================================================================
# RANKING METRICS
# ============================================================================

@dataclass(frozen=True)
class RankingRecord:
    """Scores of one query's candidates and the ground-truth best index."""

    scores: Tuple[float, ...]
    best_index: int

    def __post_init__(self):
        scores = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", scores)
        if len(scores) < 2:
            raise ConfigError(f"A ranking query needs at least 2 candidates, got {len(scores)}")
        if not all(np.isfinite(scores)):
            raise ConfigError("Ranking scores must be finite")
        if not 0 <= self.best_index < len(scores):
            raise ConfigError(f"Ground-truth index {self.best_index} outside [0, {len(scores)})")


def rank_of(record: RankingRecord) -> int:
    """1-based rank of the ground truth under descending scores.

    Ties are broken by lower candidate index first.
    """
    s = record.scores
    b = record.best_index
    ahead = sum(1 for j, v in enumerate(s) if v > s[b] or (v == s[b] and j < b))
    return ahead + 1


def mrr(records: Sequence[RankingRecord]) -> float:
    if not records:
        raise ConfigError("MRR needs at least one ranking record")
    return float(np.mean([1.0 / rank_of(r) for r in records]))


def recall_at_k(records: Sequence[RankingRecord], k: int) -> float:
    if not records:
        raise ConfigError("Recall@k needs at least one ranking record")
    n_min = min(len(r.scores) for r in records)
    if not 1 <= k <= n_min:
        raise ConfigError(f"k must lie in [1, {n_min}], got {k}")
    return float(np.mean([rank_of(r) <= k for r in records]))


@dataclass(frozen=True)
class RankingMetrics:
    mrr: float
    recall_at_1: float
    recall_at_2: float
    recall_at_4: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "mrr": self.mrr,
            "recall@1": self.recall_at_1,
            "recall@2": self.recall_at_2,
            "recall@4": self.recall_at_4,
        }


Scorer = Callable[[Trajectory, int], float]
Oracle = Callable[[Sequence[Trajectory], int], int]

CandidateSet = Tuple[int, Sequence[Trajectory]]


def template_oracle_best(rm: RewardModel) -> Oracle:
    """Ground truth: the candidate closest to the noiseless class template."""

    def best(candidates: Sequence[Trajectory], c: int) -> int:
        template = rm.template(c)
        dists = [float(((_frames(y) - template) ** 2).sum()) for y in candidates]
        return int(np.argmin(dists))

    return best


def dimension_scorer(rm: RewardModel, dimension: Union[str, Dimension]) -> Scorer:
    """Scorer on a single dimension. ``global`` uses the raw weighted mean."""
    dim = parse_dimension(dimension)
    return lambda y, c: score(rm, y, c).get(dim)


def random_scorer(seed: int = 0) -> Scorer:
    rng = np.random.default_rng(seed)
    return lambda y, c: float(rng.random())


def evaluate_reward_model(
    scorer: Union[RewardModel, Scorer],
    candidate_sets: Sequence[CandidateSet],
    oracle_best: Oracle,
) -> RankingMetrics:
    """MRR and Recall@1/2/4 of a scorer against an oracle's choice.

    Args:
        scorer: RewardModel (scores on its own dimension) or a callable
        candidate_sets: ``(condition, candidates)`` pairs, each with >= 4 candidates
        oracle_best: Returns the ground-truth best index of a set

    Returns:
        RankingMetrics bundle
    """
    if isinstance(scorer, RewardModel):
        scorer = dimension_scorer(scorer, scorer.dimension)

    records = []
    for c, candidates in candidate_sets:
        if len(candidates) < 4:
            raise ConfigError(f"Reward-model evaluation needs >= 4 candidates per set, got {len(candidates)}")
        scores = tuple(scorer(y, c) for y in candidates)
        records.append(RankingRecord(scores=scores, best_index=oracle_best(candidates, c)))

    return RankingMetrics(
        mrr=mrr(records),
        recall_at_1=recall_at_k(records, 1),
        recall_at_2=recall_at_k(records, 2),
        recall_at_4=recall_at_k(records, 4),
    )
