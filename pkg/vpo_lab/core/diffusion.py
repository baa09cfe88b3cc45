"""DDPM machinery over trajectories.

A trajectory is an ``F x D`` array of frame vectors plus a condition class.
The denoiser is a dense network that predicts the noise added to a
flattened trajectory, conditioned on a sinusoidal timestep embedding and a
one-hot class vector.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import nn
from .errors import ConfigError, FormatError, NumericGuardError, ShapeError

logger = logging.getLogger(__name__)

ALPHA_BAR_FLOOR = 1e-12

RngLike = Union[int, np.random.Generator, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep beta, alpha and cumulative alpha_bar (timesteps 0..T-1)."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)


@dataclass
class Trajectory:
    """A synthetic video: F frames of D-dimensional vectors."""

    frames: np.ndarray
    condition: int
    seed: Optional[int] = None

    def __post_init__(self):
        self.frames = np.array(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ShapeError(f"Trajectory frames must be F x D, got shape {self.frames.shape}")
        if self.frames.shape[0] < 3:
            raise ShapeError(f"Trajectory needs at least 3 frames, got {self.frames.shape[0]}")
        if not np.all(np.isfinite(self.frames)):
            raise ShapeError("Trajectory contains non-finite values")
        self.condition = int(self.condition)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dims(self) -> int:
        return self.frames.shape[1]


@dataclass
class Denoiser:
    """Noise-prediction network plus the layout of its input vector."""

    net: nn.DenseNet
    n_frames: int
    dims: int
    n_classes: int
    time_embed_width: int = 16

    def __post_init__(self):
        expected_in = self.n_frames * self.dims + self.time_embed_width + self.n_classes
        if self.net.input_width != expected_in:
            raise ShapeError(
                f"Denoiser net takes {self.net.input_width} inputs, layout needs {expected_in}"
            )
        if self.net.output_width != self.n_frames * self.dims:
            raise ShapeError(
                f"Denoiser net outputs {self.net.output_width} values, expected {self.n_frames * self.dims}"
            )

    @property
    def frame_shape(self) -> Tuple[int, int]:
        return (self.n_frames, self.dims)


def make_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta ramp from beta_start to beta_end over T timesteps."""
    if T < 2:
        raise ConfigError(f"Schedule needs T >= 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"Need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        )
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def _check_timestep(t: int, sched: NoiseSchedule) -> int:
    t = int(t)
    if not 0 <= t < sched.T:
        raise IndexError(f"Timestep {t} outside [0, {sched.T})")
    return t


def _frames_of(x: Union[Trajectory, np.ndarray]) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.frames
    return np.asarray(x, dtype=np.float64)


def forward_diffuse(
    x0: Union[Trajectory, np.ndarray],
    t: int,
    noise: np.ndarray,
    sched: NoiseSchedule,
) -> np.ndarray:
    """Corrupt a clean trajectory to timestep t: √ᾱ_t·x0 + √(1−ᾱ_t)·noise."""
    t = _check_timestep(t, sched)
    frames = _frames_of(x0)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != frames.shape:
        raise ShapeError(f"Noise shape {noise.shape} does not match trajectory shape {frames.shape}")
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * frames + np.sqrt(1.0 - ab) * noise


def timestep_embedding(t: Union[int, np.ndarray], width: int = 16) -> np.ndarray:
    """Sinusoidal embedding; returns shape (width,) or (B, width)."""
    if width < 2 or width % 2:
        raise ConfigError(f"Timestep embedding width must be even and >= 2, got {width}")
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def make_denoiser(
    n_frames: int = 16,
    dims: int = 2,
    n_classes: int = 4,
    hidden: Sequence[int] = (64, 64),
    time_embed_width: int = 16,
    activation: str = "silu",
    seed: RngLike = 0,
) -> Denoiser:
    in_width = n_frames * dims + time_embed_width + n_classes
    widths = [in_width, *hidden, n_frames * dims]
    net = nn.init_dense_net(widths, activation=activation, seed=seed)
    return Denoiser(
        net=net,
        n_frames=n_frames,
        dims=dims,
        n_classes=n_classes,
        time_embed_width=time_embed_width,
    )


def denoiser_input(d: Denoiser, x_t: np.ndarray, t, c) -> np.ndarray:
    """Concatenate flattened frames, timestep embedding and one-hot class.

    ``x_t`` is ``(F, D)`` or a batch ``(B, F, D)``; ``t`` and ``c`` are scalars
    or length-B arrays accordingly.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-2:] != d.frame_shape or x_t.ndim not in (2, 3):
        raise ShapeError(f"Expected frames of shape {d.frame_shape}, got {x_t.shape}")
    batched = x_t.ndim == 3
    n = x_t.shape[0] if batched else None

    t_arr = np.asarray(t)
    c_arr = np.asarray(c, dtype=np.int64)
    if batched:
        t_arr = np.broadcast_to(t_arr, (n,))
        c_arr = np.broadcast_to(c_arr, (n,))
    if np.any(c_arr < 0) or np.any(c_arr >= d.n_classes):
        raise ShapeError(f"Condition outside [0, {d.n_classes}): {c_arr}")

    one_hot = np.eye(d.n_classes)[c_arr]
    flat = x_t.reshape(n, -1) if batched else x_t.reshape(-1)
    return np.concatenate([flat, timestep_embedding(t_arr, d.time_embed_width), one_hot], axis=-1)


def predict_noise(d: Denoiser, x_t: np.ndarray, t, c) -> np.ndarray:
    """Network noise estimate with the same shape as ``x_t``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    out = nn.forward(d.net, denoiser_input(d, x_t, t, c))
    return out.reshape(x_t.shape)


def x0_from_noise(x_t: np.ndarray, t: int, eps_hat: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Invert the forward corruption given a noise estimate."""
    t = _check_timestep(t, sched)
    ab = sched.alpha_bar[t]
    if ab < ALPHA_BAR_FLOOR:
        raise NumericGuardError(f"alpha_bar[{t}] = {ab:.3e} is below {ALPHA_BAR_FLOOR:.0e}")
    return (np.asarray(x_t) - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def predict_x0(d: Denoiser, x_t: np.ndarray, t: int, c: int, sched: NoiseSchedule) -> Trajectory:
    """Clean-sample prediction x0̂ = (x_t − √(1−ᾱ_t)·ε̂)/√ᾱ_t."""
    t = _check_timestep(t, sched)
    eps_hat = predict_noise(d, x_t, t, c)
    return Trajectory(frames=x0_from_noise(x_t, t, eps_hat, sched), condition=c)


# ============================================================================
# ANCESTRAL SAMPLING
# ============================================================================

def strided_timesteps(T: int, steps: int) -> np.ndarray:
    """Uniformly strided, strictly descending timesteps from T-1 down to 0."""
    if not 1 <= steps <= T:
        raise ConfigError(f"Sampler steps must lie in [1, {T}], got {steps}")
    if steps == 1:
        return np.array([T - 1])
    return np.round(np.linspace(T - 1, 0, steps)).astype(np.int64)


def initial_noise(n: int, shape: Tuple[int, int], rngs: Sequence[np.random.Generator]) -> np.ndarray:
    """Draw x_T ~ N(0, I) for n rows, row i from generator i."""
    if len(rngs) != n:
        raise ShapeError(f"Need one generator per row: {n} rows, {len(rngs)} generators")
    return np.stack([rng.standard_normal(shape) for rng in rngs])


def _ancestral_transition(
    d: Denoiser,
    x: np.ndarray,
    t: int,
    t_prev: int,
    conditions: np.ndarray,
    sched: NoiseSchedule,
    rngs: Sequence[np.random.Generator],
) -> np.ndarray:
    """Move a batch from timestep t to t_prev (t_prev = -1 means clean data)."""
    ab_t = sched.alpha_bar[t]
    ab_prev = sched.alpha_bar[t_prev] if t_prev >= 0 else 1.0
    beta_eff = 1.0 - ab_t / ab_prev

    eps_hat = predict_noise(d, x, np.full(len(x), t), conditions)
    x0_hat = x0_from_noise(x, t, eps_hat, sched)

    coef_x0 = np.sqrt(ab_prev) * beta_eff / (1.0 - ab_t)
    coef_xt = np.sqrt(ab_t / ab_prev) * (1.0 - ab_prev) / (1.0 - ab_t)
    mean = coef_x0 * x0_hat + coef_xt * x
    if t_prev < 0:
        return mean

    var = beta_eff * (1.0 - ab_prev) / (1.0 - ab_t)
    noise = np.stack([rng.standard_normal(d.frame_shape) for rng in rngs])
    return mean + np.sqrt(var) * noise


def _run_chain(
    d: Denoiser,
    conditions: Sequence[int],
    sched: NoiseSchedule,
    timesteps: Sequence[int],
    rngs: Sequence[np.random.Generator],
    to_clean: bool,
    prior: Optional[np.ndarray] = None,
) -> np.ndarray:
    conditions = np.asarray(conditions, dtype=np.int64)
    n = len(conditions)
    x = initial_noise(n, d.frame_shape, rngs) if prior is None else np.array(prior, dtype=np.float64)
    if x.shape != (n,) + d.frame_shape:
        raise ShapeError(f"Prior shape {x.shape} does not match {(n,) + d.frame_shape}")

    ts = [int(t) for t in timesteps]
    for t, t_prev in zip(ts[:-1], ts[1:]):
        x = _ancestral_transition(d, x, t, t_prev, conditions, sched, rngs)
    if to_clean:
        x = _ancestral_transition(d, x, ts[-1], -1, conditions, sched, rngs)
    return x


def sample_batch(
    d: Denoiser,
    conditions: Sequence[int],
    sched: NoiseSchedule,
    steps: int,
    rngs: Sequence[np.random.Generator],
    prior: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Ancestral sampling of a batch; row i uses only generator i.

    Returns an array of shape ``(B, F, D)``. Row i is bit-identical to
    ``sample(d, conditions[i], sched, steps, rngs[i])`` with a fresh copy of
    that generator.
    """
    timesteps = strided_timesteps(sched.T, steps)
    return _run_chain(d, conditions, sched, timesteps, rngs, to_clean=True, prior=prior)


def sample(d: Denoiser, c: int, sched: NoiseSchedule, steps: int, rng: RngLike = None) -> Trajectory:
    """Draw one trajectory for condition c. Deterministic given the seed."""
    gen = as_generator(rng)
    frames = sample_batch(d, [c], sched, steps, [gen])[0]
    seed = rng if isinstance(rng, (int, np.integer)) else None
    return Trajectory(frames=frames, condition=c, seed=seed)


def denoise_to(
    d: Denoiser,
    c: int,
    sched: NoiseSchedule,
    steps: int,
    t_stop: int,
    rng: RngLike = None,
) -> np.ndarray:
    """Run the strided ancestral chain from x_T down to x_{t_stop}."""
    t_stop = _check_timestep(t_stop, sched)
    strided = strided_timesteps(sched.T, steps)
    # strided always starts at T-1, so the chain head is x_T
    timesteps = [int(t) for t in strided if t > t_stop] + [t_stop]
    return _run_chain(d, [c], sched, timesteps, [as_generator(rng)], to_clean=False)[0]


# ============================================================================
# CHECKPOINTS
# ============================================================================

def save_denoiser(d: Denoiser, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "n_frames": d.n_frames,
        "dims": d.dims,
        "n_classes": d.n_classes,
        "time_embed_width": d.time_embed_width,
        "net": nn.net_to_record(d.net),
    }
    with open(path, "w") as f:
        json.dump(record, f)
    return path


def load_denoiser(path: Path) -> Denoiser:
    try:
        with open(path, "r") as f:
            record = json.load(f)
        return Denoiser(
            net=nn.net_from_record(record["net"]),
            n_frames=record["n_frames"],
            dims=record["dims"],
            n_classes=record["n_classes"],
            time_embed_width=record["time_embed_width"],
        )
    except (json.JSONDecodeError, KeyError) as e:
        raise FormatError(f"Could not read denoiser checkpoint {path}: {e}") from e


def clone_denoiser(d: Denoiser) -> Denoiser:
    return Denoiser(
        net=nn.clone_params(d.net),
        n_frames=d.n_frames,
        dims=d.dims,
        n_classes=d.n_classes,
        time_embed_width=d.time_embed_width,
    )
