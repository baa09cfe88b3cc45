"""Base-model pretraining: standard DDPM noise-prediction regression."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import diffusion, nn
from .diffusion import Denoiser, NoiseSchedule
from .errors import ConfigError, DivergenceError
from .toy_data import Dataset

logger = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 64
    n_per_class: int = 256
    sigma_data: float = 0.05

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"Pretraining learning rate must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.n_per_class < 1:
            raise ConfigError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.sigma_data < 0:
            raise ConfigError(f"sigma_data must be >= 0, got {self.sigma_data}")


@dataclass
class PretrainResult:
    denoiser: Denoiser
    epoch_losses: List[float] = field(default_factory=list)


def pretrain(
    denoiser: Denoiser,
    dataset: Dataset,
    epochs: int,
    lr: float,
    seed: int,
    sched: NoiseSchedule,
    batch_size: int = 64,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> PretrainResult:
    """Minimize ‖ε − ε_θ(x_t, t, c)‖² over the dataset (in place).

    Each minibatch draws t ~ U[0, T) and ε ~ N(0, I) per item. The per-epoch
    mean loss is returned alongside the trained denoiser.

    Raises:
        DivergenceError: when a batch loss is NaN or infinite
    """
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    frames, conditions = dataset.arrays()
    if frames.shape[1:] != denoiser.frame_shape:
        raise ConfigError(f"Dataset frames {frames.shape[1:]} do not fit denoiser {denoiser.frame_shape}")

    rng = np.random.default_rng(seed)
    optimizer = nn.AdamState.for_net(denoiser.net, lr=lr)
    tape = nn.GradientTape.for_net(denoiser.net)
    n_items = len(frames)
    n_values = int(np.prod(denoiser.frame_shape))
    losses = []

    for epoch in range(epochs):
        order = rng.permutation(n_items)
        batch_losses = []
        for start in range(0, n_items, batch_size):
            idx = order[start:start + batch_size]
            x0 = frames[idx]
            t = rng.integers(0, sched.T, size=len(idx))
            eps = rng.standard_normal(x0.shape)
            ab = sched.alpha_bar[t][:, None, None]
            x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

            inputs = diffusion.denoiser_input(denoiser, x_t, t, conditions[idx])
            out = nn.forward(denoiser.net, inputs)
            resid = eps.reshape(len(idx), -1) - out
            loss = float((resid ** 2).mean())
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"Pretraining loss became {loss} at epoch {epoch + 1}, batch {start // batch_size + 1}"
                )

            nn.backward(denoiser.net, inputs, -2.0 * resid / (len(idx) * n_values), tape=tape)
            nn.adam_step(denoiser.net, tape, optimizer)
            batch_losses.append(loss)

        epoch_loss = float(np.mean(batch_losses))
        losses.append(epoch_loss)
        logger.debug("Pretrain epoch %d/%d loss %.5f", epoch + 1, epochs, epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch + 1, epoch_loss)

    if epochs:
        logger.info("Pretraining finished after %d epochs, final loss %.5f", epochs, losses[-1])
    return PretrainResult(denoiser=denoiser, epoch_losses=losses)
