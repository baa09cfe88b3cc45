"""Tests for the dense-network kernels, gradients and Adam."""

import numpy as np
import pytest

from vpo_lab.core import nn
from vpo_lab.core.errors import FormatError, NonFiniteGradientError, ShapeError, StateError


def _single_layer(weight, bias, activation="linear"):
    return nn.DenseNet(layers=[nn.Layer(weight=weight, bias=bias, activation=activation)])


def _loss_and_grads(net, x, target):
    """0.5‖net(x) − target‖² and its analytic gradients."""
    out = nn.forward(net, x)
    loss = 0.5 * float(((out - target) ** 2).sum())
    tape = nn.backward(net, x, out - target)
    return loss, tape.gradients()


def _finite_difference(net, x, target, h=1e-6):
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            plus = 0.5 * float(((nn.forward(net, x) - target) ** 2).sum())
            p[idx] = orig - h
            minus = 0.5 * float(((nn.forward(net, x) - target) ** 2).sum())
            p[idx] = orig
            g[idx] = (plus - minus) / (2 * h)
        grads.append(g)
    return grads


# ============================================================================
# FORWARD
# ============================================================================

class TestForward:
    """Forward evaluation examples."""

    def test_identity_layer(self):
        """Test an identity layer passes its input through."""
        net = _single_layer(np.eye(2), np.zeros(2))
        assert np.array_equal(nn.forward(net, np.array([1.0, 2.0])), [1.0, 2.0])

    def test_affine_layer(self):
        """Test a hand-computed affine layer."""
        net = _single_layer([[2.0, 0.0], [0.0, 3.0]], [1.0, 1.0])
        assert np.array_equal(nn.forward(net, np.array([1.0, 1.0])), [3.0, 4.0])

    def test_tanh_of_zero(self):
        net = _single_layer(np.ones((3, 2)), np.zeros(3), activation="tanh")
        assert np.array_equal(nn.forward(net, np.zeros(2)), np.zeros(3))

    def test_batch_rows_match_single_calls(self):
        """Test a row batch matches one call per row."""
        net = nn.init_dense_net([3, 5, 2], seed=1)
        x = np.random.default_rng(0).standard_normal((4, 3))
        batched = nn.forward(net, x)
        for i in range(4):
            assert np.allclose(batched[i], nn.forward(net, x[i]), rtol=0, atol=1e-14)

    def test_wrong_width_rejected(self):
        """Test inputs of the wrong width are rejected."""
        net = nn.init_dense_net([3, 2], seed=0)
        with pytest.raises(ShapeError):
            nn.forward(net, np.zeros(4))

    def test_mismatched_layers_rejected(self):
        """Test layers whose widths do not chain are rejected."""
        with pytest.raises(ShapeError):
            nn.DenseNet(layers=[
                nn.Layer(weight=np.zeros((3, 2)), bias=np.zeros(3)),
                nn.Layer(weight=np.zeros((2, 4)), bias=np.zeros(2)),
            ])


# ============================================================================
# BACKWARD
# ============================================================================

class TestBackward:
    """Reverse-mode gradients."""

    def test_linear_layer_outer_product(self):
        """Test the weight gradient of a linear layer is an outer product."""
        net = _single_layer(np.zeros((2, 3)), np.zeros(2))
        x = np.array([1.0, -2.0, 0.5])
        g = np.array([0.3, -1.5])
        nn.forward(net, x)
        tape = nn.backward(net, x, g)
        assert np.array_equal(tape.weight_grads[0], np.outer(g, x))
        assert np.array_equal(tape.bias_grads[0], g)

    def test_zero_upstream_gives_zero_tape(self):
        """Test a zero upstream gradient leaves the tape at zero."""
        net = nn.init_dense_net([4, 6, 3], seed=2)
        x = np.ones(4)
        nn.forward(net, x)
        assert nn.backward(net, x, np.zeros(3)).is_zero()

    def test_backward_without_forward(self):
        """Test backward needs a cached forward pass."""
        net = nn.init_dense_net([2, 2], seed=0)
        with pytest.raises(StateError):
            nn.backward(net, np.zeros(2), np.zeros(2))

    def test_backward_with_stale_input(self):
        """Test backward refuses an input other than the cached one."""
        net = nn.init_dense_net([2, 2], seed=0)
        nn.forward(net, np.zeros(2))
        with pytest.raises(StateError):
            nn.backward(net, np.ones(2), np.zeros(2))

    def test_tape_accumulates(self):
        """Test repeated backward calls add up on one tape."""
        net = nn.init_dense_net([3, 4, 2], seed=3)
        x = np.array([0.1, 0.2, 0.3])
        g = np.array([1.0, -1.0])
        nn.forward(net, x)
        once = [a.copy() for a in nn.backward(net, x, g).gradients()]
        tape = nn.backward(net, x, g)
        nn.backward(net, x, g, tape=tape)
        for a, b in zip(once, tape.gradients()):
            assert np.allclose(b, 2 * a, rtol=0, atol=1e-15)
        assert tape.count == 2

    @pytest.mark.parametrize("instance", range(100))
    def test_gradient_matches_finite_differences(self, instance):
        """Test random nets against central finite differences."""
        rng = np.random.default_rng(1000 + instance)
        depth = int(rng.integers(1, 4))
        widths = [int(w) for w in rng.integers(1, 17, size=depth + 1)]
        activation = ["tanh", "silu", "linear"][instance % 3]
        net = nn.init_dense_net(widths, activation=activation, seed=rng)
        batch = instance % 2 == 0
        x = rng.standard_normal((3, widths[0]) if batch else widths[0])
        target = rng.standard_normal((3, widths[-1]) if batch else widths[-1])

        _, analytic = _loss_and_grads(net, x, target)
        numeric = _finite_difference(net, x, target)
        for a, n in zip(analytic, numeric):
            assert np.allclose(a, n, rtol=1e-4, atol=1e-7)


# ============================================================================
# ADAM
# ============================================================================

class TestAdam:
    """Bias-corrected Adam updates."""

    def _setup(self, grad):
        net = _single_layer(np.zeros((1, 1)), np.zeros(1))
        tape = nn.GradientTape.for_net(net)
        tape.weight_grads[0][...] = grad
        tape.bias_grads[0][...] = grad
        tape.count = 1
        return net, tape, nn.AdamState.for_net(net, lr=1e-3)

    def test_first_step_moves_by_lr(self):
        """Test the first bias-corrected step moves each parameter by lr."""
        net, tape, state = self._setup(0.37)
        nn.adam_step(net, tape, state)
        assert net.layers[0].weight[0, 0] == pytest.approx(-1e-3, rel=1e-6)

    def test_first_step_sign_follows_gradient(self):
        """Test the first step moves against the gradient sign."""
        net, tape, state = self._setup(-5.0)
        nn.adam_step(net, tape, state)
        assert net.layers[0].bias[0] == pytest.approx(1e-3, rel=1e-6)

    def test_zero_gradient_leaves_params(self):
        """Test a zero gradient leaves the parameters unchanged."""
        net, tape, state = self._setup(0.0)
        nn.adam_step(net, tape, state)
        assert net.layers[0].weight[0, 0] == 0.0
        assert net.layers[0].bias[0] == 0.0

    def test_second_identical_step_not_larger(self):
        """Test a repeated gradient does not grow the step."""
        net, tape, state = self._setup(0.8)
        nn.adam_step(net, tape, state)
        first = abs(net.layers[0].weight[0, 0])
        tape.weight_grads[0][...] = 0.8
        tape.bias_grads[0][...] = 0.8
        tape.count = 1
        before = net.layers[0].weight[0, 0]
        nn.adam_step(net, tape, state)
        second = abs(net.layers[0].weight[0, 0] - before)
        assert second <= first + 1e-12

    def test_step_clears_tape(self):
        """Test the tape is cleared after an update."""
        net, tape, state = self._setup(1.0)
        nn.adam_step(net, tape, state)
        assert tape.is_zero()
        assert tape.count == 0
        assert state.step == 1

    def test_empty_tape_rejected(self):
        """Test an update needs accumulated gradients."""
        net = _single_layer(np.zeros((1, 1)), np.zeros(1))
        with pytest.raises(StateError):
            nn.adam_step(net, nn.GradientTape.for_net(net), nn.AdamState.for_net(net))

    def test_non_finite_gradient_names_layer(self):
        """Test a non-finite gradient error names its layer."""
        net, tape, state = self._setup(1.0)
        tape.bias_grads[0][0] = np.nan
        with pytest.raises(NonFiniteGradientError, match="layer 0 bias"):
            nn.adam_step(net, tape, state)
        assert net.layers[0].weight[0, 0] == 0.0


# ============================================================================
# CLONES AND CHECKPOINTS
# ============================================================================

class TestCloneAndCheckpoint:
    """Deep copies and JSON checkpoints."""

    def test_clone_is_exact_and_independent(self):
        """Test clones are bit-identical and independent."""
        net = nn.init_dense_net([3, 4, 2], seed=5)
        clone = nn.clone_params(net)
        x = np.array([0.5, -0.1, 2.0])
        assert nn.params_equal(net, clone)
        assert np.array_equal(nn.forward(net, x), nn.forward(clone, x))

        snapshot = clone.layers[0].weight.copy()
        net.layers[0].weight += 1.0
        assert not nn.params_equal(net, clone)
        assert np.array_equal(clone.layers[0].weight, snapshot)

    def test_checkpoint_restores_bits(self, tmp_path):
        """Test a checkpoint restores every parameter bit."""
        net = nn.init_dense_net([4, 8, 3], activation="tanh", seed=11)
        path = nn.save_params(net, tmp_path / "net.json")
        restored = nn.load_params(path)
        assert nn.params_equal(net, restored)

    def test_checkpoint_rejects_foreign_record(self, tmp_path):
        """Test records with another format tag are rejected."""
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else", "version": 1, "layers": []}')
        with pytest.raises(FormatError):
            nn.load_params(path)

    def test_checkpoint_rejects_garbage(self, tmp_path):
        """Test unparsable checkpoints are format errors."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(FormatError):
            nn.load_params(path)
