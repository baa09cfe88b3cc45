"""Tests for the reward feedback learning baseline."""

from unittest.mock import patch

import numpy as np
import pytest

from vpo_lab.core import diffusion, nn, rewards
from vpo_lab.core.diffusion import make_schedule
from vpo_lab.core.errors import ConfigError
from vpo_lab.core.refl import default_t_range, refl_loss, refl_step, train_refl
from vpo_lab.core.trainers import VpoConfig


def _neg_sq_norm(frames):
    return -float((frames ** 2).sum()), -2.0 * frames


def _constant(frames):
    return 1.0, np.zeros_like(frames)


class TestTimestepRange:
    """Low-noise window the reward gradient is taken in."""

    def test_default_for_fifty_steps(self):
        """Test the default window on a fifty-step chain."""
        assert default_t_range(make_schedule(50, 1e-4, 0.05)) == (0, 14)

    def test_default_for_ten_steps(self, sched):
        assert default_t_range(sched) == (0, 2)

    def test_full_fraction(self, sched):
        """Test a full fraction spans the whole chain."""
        assert default_t_range(sched, 1.0) == (0, sched.T - 1)

    @pytest.mark.parametrize("t_range", [(-1, 2), (3, 2), (0, 10)])
    def test_invalid_range(self, small_denoiser, sched, t_range):
        """Test windows outside the chain are rejected."""
        optimizer = nn.AdamState.for_net(small_denoiser.net)
        with pytest.raises(ConfigError):
            refl_step(small_denoiser, _constant, 0, sched, t_range, optimizer, np.random.default_rng(0))


class TestReflLoss:
    """Reward gradient through the clean-sample prediction."""

    def test_matches_finite_differences(self, small_denoiser, sched):
        """Test the loss gradient against finite differences."""
        x_t = np.random.default_rng(5).standard_normal((6, 2))
        t = 2

        _, _, tape = refl_loss(small_denoiser, _neg_sq_norm, 1, sched, t, x_t)
        h = 1e-6
        for p, g in zip(small_denoiser.net.parameters(), tape.gradients()):
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + h
                plus = refl_loss(small_denoiser, _neg_sq_norm, 1, sched, t, x_t)[0]
                p[idx] = orig - h
                minus = refl_loss(small_denoiser, _neg_sq_norm, 1, sched, t, x_t)[0]
                p[idx] = orig
                assert g[idx] == pytest.approx((plus - minus) / (2 * h), rel=1e-4, abs=1e-7)

    def test_loss_is_negative_reward(self, small_denoiser, sched):
        """Test the loss is the negated reward of the prediction."""
        x_t = np.random.default_rng(6).standard_normal((6, 2))
        loss, x0_hat, _ = refl_loss(small_denoiser, _neg_sq_norm, 0, sched, 1, x_t)
        assert loss == pytest.approx(float((x0_hat ** 2).sum()), rel=1e-12)

    def test_constant_reward_leaves_policy_unchanged(self, small_denoiser, sched):
        """Test a reward without gradient leaves the policy alone."""
        before = nn.clone_params(small_denoiser.net)
        optimizer = nn.AdamState.for_net(small_denoiser.net)
        result = refl_step(
            small_denoiser, _constant, 0, sched, (0, 2), optimizer, np.random.default_rng(1), sampler_steps=3
        )
        assert result.reward == 1.0
        assert 0 <= result.t <= 2
        assert nn.params_equal(before, small_denoiser.net)


class TestTrainRefl:
    """The full ReFL loop on a reward model."""

    def test_records_every_step(self, small_denoiser, reward_model, sched):
        """Test every step is recorded and the policy moves."""
        cfg = VpoConfig(steps=4, sampler_steps=2, seed=1)
        before = nn.clone_params(small_denoiser.net)
        _, metrics = train_refl(small_denoiser, reward_model, [0, 1, 2], cfg, sched)
        assert [r.step for r in metrics.steps] == [1, 2, 3, 4]
        assert all(np.isfinite(r.loss) for r in metrics.steps)
        assert all(r.pairs == 0 and not r.ref_updated for r in metrics.steps)
        assert not nn.params_equal(before, small_denoiser.net)

    def test_same_seed_same_run(self, small_denoiser, reward_model, sched):
        """Test ReFL is reproducible from its seed."""
        cfg = VpoConfig(steps=3, sampler_steps=2, seed=4)
        a = diffusion.clone_denoiser(small_denoiser)
        b = diffusion.clone_denoiser(small_denoiser)
        _, ma = train_refl(a, reward_model, [0, 1], cfg, sched)
        _, mb = train_refl(b, reward_model, [0, 1], cfg, sched)
        assert np.array_equal(ma.losses(), mb.losses())
        assert nn.params_equal(a.net, b.net)

    def test_empty_prompts(self, small_denoiser, reward_model, sched):
        """Test an empty prompt set is rejected."""
        with pytest.raises(ConfigError):
            train_refl(small_denoiser, reward_model, [], VpoConfig(steps=1), sched)

    def test_per_frame_feedback_drives_the_gradient(self, small_denoiser, reward_model, sched):
        """Test per-frame feedback ascends the order-blind frame scorer."""
        cfg = VpoConfig(steps=3, sampler_steps=2, seed=2, feedback="per_frame")
        with patch("vpo_lab.core.rewards.frame_quality_and_grad", wraps=rewards.frame_quality_and_grad) as mock_fq, \
                patch("vpo_lab.core.rewards.reward_and_grad", wraps=rewards.reward_and_grad) as mock_dim:
            _, metrics = train_refl(small_denoiser, reward_model, [0, 1, 2], cfg, sched)
        assert mock_fq.call_count == 3
        assert mock_dim.call_count == 0
        assert [c.args[2] for c in mock_fq.call_args_list] == [0, 1, 2]
        assert all(np.isfinite(r.loss) for r in metrics.steps)
