"""Tests for held-out reward evaluation."""

import numpy as np
import pytest

from vpo_lab.core.errors import ConfigError
from vpo_lab.core.evaluation import evaluate_policy, evaluate_trajectories, reward_trend
from vpo_lab.core.rewards import Dimension
from vpo_lab.core.trainers import EvalRecord


class TestEvaluateTrajectories:
    """Statistics over a fixed sample."""

    def test_templates_score_as_oracle(self, reward_model, specs):
        """Test noiseless templates score as the best possible sample."""
        conditions = [s.class_id for s in specs]
        stats = evaluate_trajectories(reward_model, [reward_model.template(c) for c in conditions], conditions)

        assert set(stats) == {d.value for d in Dimension}
        assert stats["alignment"][0] == pytest.approx(1.0, abs=1e-12)
        assert stats["visual_quality"] == (0.0, 0.0)

        n_frames = reward_model.templates.shape[1]
        expected_tc = np.mean([
            -(s.amplitude ** 2) * (2.0 - 2.0 * np.cos(2.0 * np.pi * s.frequency / n_frames)) ** 2 for s in specs
        ])
        assert stats["temporal_consistency"][0] == pytest.approx(expected_tc, rel=1e-9)

    def test_single_sample_has_zero_spread(self, reward_model):
        """Test one sample has zero standard deviation."""
        y = np.random.default_rng(0).standard_normal((6, 2))
        stats = evaluate_trajectories(reward_model, [y], [1])
        assert all(std == 0.0 for _, std in stats.values())

    def test_empty_sample(self, reward_model):
        """Test an empty sample is rejected."""
        with pytest.raises(ConfigError):
            evaluate_trajectories(reward_model, [], [])

    def test_condition_count_mismatch(self, reward_model):
        """Test every trajectory needs a condition."""
        with pytest.raises(ConfigError):
            evaluate_trajectories(reward_model, [np.zeros((6, 2))], [0, 1])


class TestEvaluatePolicy:
    """Sampling-based evaluation of a denoiser."""

    def test_same_seed_same_stats(self, small_denoiser, reward_model, sched):
        """Test the evaluation seed fixes the sampled noise."""
        a = evaluate_policy(small_denoiser, reward_model, [0, 2], 3, 11, sched, sampler_steps=3)
        b = evaluate_policy(small_denoiser, reward_model, [0, 2], 3, 11, sched, sampler_steps=3)
        assert a == b

    def test_other_seed_other_stats(self, small_denoiser, reward_model, sched):
        """Test another seed evaluates other samples."""
        a = evaluate_policy(small_denoiser, reward_model, [0], 4, 1, sched, sampler_steps=3)
        b = evaluate_policy(small_denoiser, reward_model, [0], 4, 2, sched, sampler_steps=3)
        assert a != b

    @pytest.mark.parametrize("n,prompts", [(0, [0]), (2, [])])
    def test_invalid_request(self, small_denoiser, reward_model, sched, n, prompts):
        """Test empty prompt sets and zero sample counts are rejected."""
        with pytest.raises(ConfigError):
            evaluate_policy(small_denoiser, reward_model, prompts, n, 0, sched)


# ============================================================================
# REWARD TRENDS
# ============================================================================

def _evals(values, every=50):
    return [
        EvalRecord(step=i * every, stats={d.value: (v, 0.0) for d in Dimension})
        for i, v in enumerate(values)
    ]


class TestRewardTrend:
    """Peak and decline of a held-out reward curve."""

    def test_rise_then_decline(self):
        """Test a curve that peaks and falls back is flagged as collapsed."""
        trend = reward_trend(_evals([-1.0, -0.5, -0.4, -0.6]), "temporal_consistency")
        assert (trend.peak_step, trend.peak, trend.final_step, trend.final) == (100, -0.4, 150, -0.6)
        assert trend.decline == pytest.approx(0.5)
        assert trend.collapsed()

    def test_monotone_rise(self):
        """Test a curve still rising at its last point has no decline."""
        trend = reward_trend(_evals([-1.0, -0.8, -0.7]), "alignment")
        assert trend.peak_step == trend.final_step == 100
        assert trend.decline == 0.0
        assert not trend.collapsed()

    def test_small_dip_is_not_collapse(self):
        """Test a decline under the threshold is tolerated."""
        trend = reward_trend(_evals([-1.0, -0.50, -0.51]), "global")
        assert not trend.collapsed()
        assert trend.collapsed(threshold=0.01)

    def test_earliest_peak_wins_ties(self):
        """Test equal maxima resolve to the first step reaching them."""
        assert reward_trend(_evals([0.2, 0.5, 0.5]), "dynamic_degree").peak_step == 50

    def test_serialized_fields(self):
        """Test the stored record carries the decline next to the curve points."""
        record = reward_trend(_evals([1.0, 2.0, 1.0]), "visual_quality").to_dict()
        assert record == {"peak_step": 50, "peak": 2.0, "final_step": 100, "final": 1.0, "decline": 0.5}

    def test_empty_curve(self):
        """Test a curve without evaluations is rejected."""
        with pytest.raises(ConfigError):
            reward_trend([], "global")
