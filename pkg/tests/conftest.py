"""Shared fixtures and the --runslow switch for multi-seed acceptance runs."""

import pytest

from vpo_lab.core import diffusion
from vpo_lab.core.rewards import RewardModel
from vpo_lab.core.toy_data import make_class_specs


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow multi-seed tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# Small world used across unit tests: 6 frames, 2 dims, 3 classes, T=10.
N_FRAMES = 6
DIMS = 2
N_CLASSES = 3


@pytest.fixture
def sched():
    return diffusion.make_schedule(10, 1e-4, 0.2)


@pytest.fixture
def specs():
    return make_class_specs(N_CLASSES, seed=0, dims=DIMS)


@pytest.fixture
def reward_model(specs):
    return RewardModel.from_specs(specs, N_FRAMES, DIMS)


@pytest.fixture
def small_denoiser():
    return diffusion.make_denoiser(
        n_frames=N_FRAMES, dims=DIMS, n_classes=N_CLASSES, hidden=(16,), time_embed_width=4, seed=7
    )
