"""Dense-network kernels with reverse-mode gradients and an Adam optimizer.

Everything runs in float64. A network caches the activations of its most
recent forward pass; ``backward`` consumes that cache and accumulates
parameter gradients into a ``GradientTape`` until the optimizer clears it.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, FormatError, NonFiniteGradientError, ShapeError, StateError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("linear", "tanh", "silu")

CHECKPOINT_FORMAT = "vpo-lab/dense-net"
CHECKPOINT_VERSION = 1


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form stays finite for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "linear":
        return z
    if tag == "tanh":
        return np.tanh(z)
    return z * _sigmoid(z)


def _activation_grad(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "linear":
        return np.ones_like(z)
    if tag == "tanh":
        return 1.0 - np.tanh(z) ** 2
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass
class Layer:
    """One affine map followed by an activation."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"Layer weight must be 2-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"Layer bias shape {self.bias.shape} does not match weight rows {self.weight.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"Unknown activation '{self.activation}' (expected one of {ACTIVATIONS})")

    @property
    def in_width(self) -> int:
        return self.weight.shape[1]

    @property
    def out_width(self) -> int:
        return self.weight.shape[0]


@dataclass
class _ForwardCache:
    inputs: np.ndarray
    layer_inputs: List[np.ndarray]
    preactivations: List[np.ndarray]


@dataclass
class DenseNet:
    """A chain of dense layers. ``out_i`` of each layer feeds ``in_{i+1}``."""

    layers: List[Layer]
    cache: Optional[_ForwardCache] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("DenseNet needs at least one layer")
        for i in range(len(self.layers) - 1):
            if self.layers[i].out_width != self.layers[i + 1].in_width:
                raise ShapeError(
                    f"Layer {i} outputs {self.layers[i].out_width} values but layer {i + 1} "
                    f"expects {self.layers[i + 1].in_width}"
                )

    @property
    def input_width(self) -> int:
        return self.layers[0].in_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in a fixed order: w0, b0, w1, b1, ..."""
        params = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params


@dataclass
class GradientTape:
    """Gradient buffers mirroring a network's parameter shapes."""

    weight_grads: List[np.ndarray]
    bias_grads: List[np.ndarray]
    count: int = 0

    @classmethod
    def for_net(cls, net: DenseNet) -> "GradientTape":
        return cls(
            weight_grads=[np.zeros_like(layer.weight) for layer in net.layers],
            bias_grads=[np.zeros_like(layer.bias) for layer in net.layers],
        )

    def gradients(self) -> List[np.ndarray]:
        """Gradient arrays in the same order as ``DenseNet.parameters``."""
        grads = []
        for gw, gb in zip(self.weight_grads, self.bias_grads):
            grads.extend([gw, gb])
        return grads

    def zero(self) -> None:
        for g in self.gradients():
            g.fill(0.0)
        self.count = 0

    def is_zero(self) -> bool:
        return all(not np.any(g) for g in self.gradients())


@dataclass
class AdamState:
    """Adam moment buffers and hyperparameters (no weight decay)."""

    first_moments: List[np.ndarray]
    second_moments: List[np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"Learning rate must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"Adam betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if self.eps <= 0:
            raise ConfigError(f"Adam epsilon must be positive, got {self.eps}")

    @classmethod
    def for_net(
        cls,
        net: DenseNet,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        params = net.parameters()
        return cls(
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def init_dense_net(
    widths: Sequence[int],
    activation: str = "silu",
    seed: Union[int, np.random.Generator, None] = 0,
    output_activation: str = "linear",
) -> DenseNet:
    """Build a network with uniform fan-in initialization.

    Args:
        widths: Layer widths including input and output, e.g. ``[52, 64, 64, 32]``
        activation: Activation for hidden layers
        seed: Integer seed or an existing generator
        output_activation: Activation of the final layer

    Returns:
        A freshly initialized DenseNet
    """
    if len(widths) < 2:
        raise ConfigError(f"Need at least input and output widths, got {list(widths)}")
    if any(w < 1 for w in widths):
        raise ConfigError(f"Layer widths must be positive, got {list(widths)}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        tag = output_activation if i == len(widths) - 2 else activation
        layers.append(
            Layer(
                weight=rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                bias=rng.uniform(-bound, bound, size=fan_out),
                activation=tag,
            )
        )
    return DenseNet(layers=layers)


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a vector or a batch of row vectors.

    The activations are cached on ``net`` for a subsequent ``backward``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_width:
        raise ShapeError(f"Expected input of width {net.input_width}, got shape {x.shape}")

    layer_inputs = []
    preactivations = []
    a = x
    for layer in net.layers:
        layer_inputs.append(a)
        z = a @ layer.weight.T + layer.bias
        preactivations.append(z)
        a = _activate(layer.activation, z)

    net.cache = _ForwardCache(inputs=x.copy(), layer_inputs=layer_inputs, preactivations=preactivations)
    return a


def backward(
    net: DenseNet,
    x: np.ndarray,
    upstream: np.ndarray,
    tape: Optional[GradientTape] = None,
) -> GradientTape:
    """Accumulate ∂(upstream · output)/∂params into a tape.

    ``x`` must be the input of the most recent ``forward`` call on ``net``.
    For batched input the contributions of all rows are summed.
    """
    cache = net.cache
    x = np.asarray(x, dtype=np.float64)
    if cache is None:
        raise StateError("backward called before forward on this network")
    if cache.inputs.shape != x.shape or not np.array_equal(cache.inputs, x):
        raise StateError("backward input does not match the cached forward pass")

    delta = np.asarray(upstream, dtype=np.float64)
    expected = x.shape[:-1] + (net.output_width,)
    if delta.shape != expected:
        raise ShapeError(f"Upstream gradient shape {delta.shape} does not match output shape {expected}")

    if tape is None:
        tape = GradientTape.for_net(net)
    elif len(tape.weight_grads) != len(net.layers):
        raise ShapeError("Gradient tape does not belong to this network")

    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        delta = delta * _activation_grad(layer.activation, cache.preactivations[i])
        a_prev = cache.layer_inputs[i]
        if delta.ndim == 1:
            tape.weight_grads[i] += np.outer(delta, a_prev)
            tape.bias_grads[i] += delta
        else:
            tape.weight_grads[i] += delta.T @ a_prev
            tape.bias_grads[i] += delta.sum(axis=0)
        delta = delta @ layer.weight

    tape.count += 1
    return tape


def adam_step(net: DenseNet, tape: GradientTape, state: AdamState) -> DenseNet:
    """Apply one bias-corrected Adam update in place and clear the tape."""
    if tape.count == 0:
        raise StateError("adam_step called with an empty gradient tape")

    params = net.parameters()
    grads = tape.gradients()
    if len(params) != len(grads) or len(params) != len(state.first_moments):
        raise ShapeError("Optimizer state, tape and network disagree on parameter count")

    for idx, g in enumerate(grads):
        if g.shape != params[idx].shape:
            raise ShapeError(f"Gradient {idx} has shape {g.shape}, parameter has {params[idx].shape}")
        if not np.all(np.isfinite(g)):
            layer_idx, kind = divmod(idx, 2)
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NonFiniteGradientError(
                f"Non-finite gradient in layer {layer_idx} {'bias' if kind else 'weight'}: "
                f"{bad} of {g.size} entries (optimizer step {state.step + 1})"
            )

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)

    tape.zero()
    return net


def clone_params(net: DenseNet) -> DenseNet:
    """Deep copy with independent storage; the forward cache is not copied."""
    return DenseNet(
        layers=[
            Layer(weight=layer.weight.copy(), bias=layer.bias.copy(), activation=layer.activation)
            for layer in net.layers
        ]
    )


def params_equal(a: DenseNet, b: DenseNet) -> bool:
    """Exact element-wise equality of two networks' parameters."""
    if len(a.layers) != len(b.layers):
        return False
    return all(
        la.activation == lb.activation
        and np.array_equal(la.weight, lb.weight)
        and np.array_equal(la.bias, lb.bias)
        for la, lb in zip(a.layers, b.layers)
    )


# ============================================================================
# CHECKPOINTS
# ============================================================================

def net_to_record(net: DenseNet) -> dict:
    """Structured record: layer shapes, activation tags, row-major values."""
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layers": [
            {
                "shape": [layer.out_width, layer.in_width],
                "activation": layer.activation,
                "weight": layer.weight.ravel(order="C").tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in net.layers
        ],
    }


def net_from_record(record: dict) -> DenseNet:
    if record.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"Not a dense-net record: format={record.get('format')!r}")
    if record.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"Unsupported dense-net record version {record.get('version')!r}")
    try:
        layers = []
        for entry in record["layers"]:
            rows, cols = entry["shape"]
            weight = np.array(entry["weight"], dtype=np.float64)
            if weight.size != rows * cols:
                raise FormatError(f"Weight has {weight.size} values, shape says {rows}x{cols}")
            layers.append(
                Layer(
                    weight=weight.reshape(rows, cols),
                    bias=np.array(entry["bias"], dtype=np.float64),
                    activation=entry["activation"],
                )
            )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"Malformed dense-net record: {e}") from e
    return DenseNet(layers=layers)


def save_params(net: DenseNet, path: Path) -> Path:
    """Write a network checkpoint as JSON. Floats round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(net_to_record(net), f)
    logger.debug("Saved %d-layer network to %s", len(net.layers), path)
    return path


def load_params(path: Path) -> DenseNet:
    try:
        with open(path, "r") as f:
            record = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"Checkpoint {path} is not valid JSON: {e}") from e
    return net_from_record(record)
