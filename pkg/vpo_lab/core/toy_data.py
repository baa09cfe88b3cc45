"""Synthetic class-conditioned trajectory domain.

Each class is a noisy circular motion with its own frequency, amplitude,
phase and drift. The class ids double as the prompt set for alignment.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .diffusion import Trajectory
from .errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

FREQ_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class ClassSpec:
    """Template parameters for one condition class."""

    class_id: int
    frequency: float
    amplitude: float
    phase: float
    drift: Tuple[float, ...]

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ConfigError(f"Class {self.class_id}: amplitude must be positive, got {self.amplitude}")
        if self.frequency <= 0:
            raise ConfigError(f"Class {self.class_id}: frequency must be positive, got {self.frequency}")


@dataclass
class Dataset:
    """Balanced set of trajectories; each trajectory carries its class."""

    items: List[Trajectory]
    seed: int
    sigma: float
    specs: List[ClassSpec] = field(default_factory=list)

    def __post_init__(self):
        if not self.items:
            raise ConfigError("Dataset must not be empty")

    def __len__(self) -> int:
        return len(self.items)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Frames as ``(N, F, D)`` and conditions as ``(N,)``."""
        frames = np.stack([tr.frames for tr in self.items])
        conditions = np.array([tr.condition for tr in self.items], dtype=np.int64)
        return frames, conditions

    def class_counts(self) -> dict:
        counts = {}
        for tr in self.items:
            counts[tr.condition] = counts.get(tr.condition, 0) + 1
        return counts


def make_class_specs(C: int, seed: int = 0, dims: int = 2) -> List[ClassSpec]:
    """C distinct class templates with frequencies spread over [0.5, 2.0]."""
    if C < 2:
        raise ConfigError(f"Need at least 2 classes, got {C}")
    if dims < 1:
        raise ConfigError(f"Trajectory dimension must be positive, got {dims}")

    rng = np.random.default_rng(seed)
    frequencies = rng.permutation(np.linspace(*FREQ_RANGE, C))
    specs = []
    for class_id in range(C):
        specs.append(
            ClassSpec(
                class_id=class_id,
                frequency=float(frequencies[class_id]),
                amplitude=float(rng.uniform(0.6, 1.0)),
                phase=float(rng.uniform(0.0, 2.0 * np.pi)),
                drift=tuple(float(v) for v in rng.uniform(-0.02, 0.02, size=dims)),
            )
        )
    return specs


def class_template(spec: ClassSpec, n_frames: int, dims: int) -> np.ndarray:
    """Noiseless template curve of shape (F, D)."""
    if n_frames < 3:
        raise ShapeError(f"Trajectories need at least 3 frames, got {n_frames}")
    if len(spec.drift) != dims:
        raise ShapeError(f"Class {spec.class_id} drift has {len(spec.drift)} dims, expected {dims}")

    f = np.arange(n_frames, dtype=np.float64)
    angle = 2.0 * np.pi * spec.frequency * f / n_frames + spec.phase
    frames = np.zeros((n_frames, dims))
    frames[:, 0] = spec.amplitude * np.sin(angle)
    if dims > 1:
        frames[:, 1] = spec.amplitude * np.cos(angle)
    return frames + np.outer(f, np.asarray(spec.drift))


def sample_trajectory(spec: ClassSpec, n_frames: int, dims: int, sigma: float, seed: int) -> Trajectory:
    """Template plus isotropic Gaussian noise of scale sigma."""
    if sigma < 0:
        raise ConfigError(f"Noise scale must be non-negative, got {sigma}")
    rng = np.random.default_rng(seed)
    frames = class_template(spec, n_frames, dims) + sigma * rng.standard_normal((n_frames, dims))
    return Trajectory(frames=frames, condition=spec.class_id, seed=int(seed))


def make_dataset(
    specs: Sequence[ClassSpec],
    n_per_class: int,
    n_frames: int,
    dims: int,
    sigma: float,
    seed: int = 0,
) -> Dataset:
    """Class-major balanced dataset, bit-identical for a given seed."""
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")

    item_seeds = np.random.SeedSequence(seed).generate_state(len(specs) * n_per_class, dtype=np.uint64)
    items = []
    for k, spec in enumerate(specs):
        for j in range(n_per_class):
            items.append(sample_trajectory(spec, n_frames, dims, sigma, int(item_seeds[k * n_per_class + j])))

    logger.debug("Generated %d trajectories over %d classes", len(items), len(specs))
    return Dataset(items=items, seed=seed, sigma=sigma, specs=list(specs))


def make_prompts(C: int, holdout: Sequence[int] = ()) -> List[int]:
    """Alignment prompt set: class ids not held out, in order."""
    prompts = [c for c in range(C) if c not in set(holdout)]
    if not prompts:
        raise ConfigError(f"All {C} classes are held out; prompt set is empty")
    return prompts


def templates_for(specs: Sequence[ClassSpec], n_frames: int, dims: int) -> np.ndarray:
    """Stacked noiseless templates, shape (C, F, D), indexed by class id."""
    ordered = sorted(specs, key=lambda s: s.class_id)
    return np.stack([class_template(s, n_frames, dims) for s in ordered])
