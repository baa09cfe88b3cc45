"""Model configuration and JSON config-file plumbing."""

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Type, TypeVar

from . import diffusion
from .diffusion import Denoiser, NoiseSchedule
from .errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_SECTIONS = ("experiment", "vpo", "model", "pretrain", "sweep")

T = TypeVar("T")


@dataclass
class ModelConfig:
    """Shape of the toy world and of the denoiser trained on it.

    ``world_seed`` fixes the class templates, so every run seed shares one
    reward model.
    """

    n_frames: int = 16
    dims: int = 2
    n_classes: int = 4
    T: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.05
    hidden: Tuple[int, ...] = (64, 64)
    time_embed_width: int = 16
    activation: str = "silu"
    world_seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.n_frames < 3:
            raise ConfigError(f"n_frames must be >= 3, got {self.n_frames}")
        if self.dims < 1:
            raise ConfigError(f"dims must be >= 1, got {self.dims}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if any(h < 1 for h in self.hidden):
            raise ConfigError(f"Hidden widths must be positive, got {self.hidden}")
        if self.time_embed_width < 2 or self.time_embed_width % 2:
            raise ConfigError(f"time_embed_width must be an even number >= 2, got {self.time_embed_width}")

    def schedule(self) -> NoiseSchedule:
        return diffusion.make_schedule(self.T, self.beta_start, self.beta_end)

    def denoiser(self, seed: int) -> Denoiser:
        return diffusion.make_denoiser(
            n_frames=self.n_frames,
            dims=self.dims,
            n_classes=self.n_classes,
            hidden=self.hidden,
            time_embed_width=self.time_embed_width,
            activation=self.activation,
            seed=seed,
        )


def load_settings(path: Path) -> Dict[str, Dict[str, Any]]:
    """Read a JSON config file.

    The document may hold the top-level sections ``experiment``, ``vpo``,
    ``model``, ``pretrain`` and ``sweep``; anything else is rejected.

    Raises:
        ConfigError: unreadable file, non-object JSON or unknown section
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r") as f:
            settings = json.load(f)
    except (json.JSONDecodeError, IOError) as e:
        raise ConfigError(f"Error reading config {path}: {e}") from e

    if not isinstance(settings, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    unknown = sorted(set(settings) - set(CONFIG_SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config section(s) {unknown}; expected {list(CONFIG_SECTIONS)}")
    for name, section in settings.items():
        if not isinstance(section, dict):
            raise ConfigError(f"Config section '{name}' must be an object")
    logger.debug("Loaded config sections %s from %s", sorted(settings), path)
    return settings


def save_settings(settings: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(settings, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def merge_sections(
    base: Dict[str, Dict[str, Any]],
    overrides: Optional[Dict[str, Dict[str, Any]]],
) -> Dict[str, Dict[str, Any]]:
    """Overlay non-None override values section by section."""
    merged = {name: dict(section) for name, section in base.items()}
    for name, section in (overrides or {}).items():
        for key, value in section.items():
            if value is not None:
                merged.setdefault(name, {})[key] = value
    return merged


def build_section(cls: Type[T], values: Dict[str, Any], section: str, exclude: Sequence[str] = ()) -> T:
    """Instantiate a config dataclass, rejecting keys it does not define."""
    known = {f.name for f in dataclasses.fields(cls)} - set(exclude)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in config section '{section}'")
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"Bad value in config section '{section}': {e}") from e
