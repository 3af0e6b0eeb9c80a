import functools
import itertools

import numpy as np
import pytest

from freeprop.data.synthdata import SceneConfig, generate_dataset
from freeprop.modules.csp import CspConfig
from freeprop.modules.matching_loss import LossConfig
from freeprop.pipeline.model import ModelConfig
from freeprop.pipeline.training import TrainConfig


@pytest.fixture
def micro_model_config():
    return ModelConfig(canvas=16, channels=8, num_queries=4, decoder_layers=1, top_k=2, stem_stride=1, backbone_channels=(4, 4, 8, 8))


@pytest.fixture
def micro_scene_config():
    return SceneConfig(canvas=16, objects_min=1, objects_max=3, size_min=0.25, size_max=0.5, count=8, seed=3)


@pytest.fixture
def micro_csp_config():
    return CspConfig(delta=0.3, iterations=2)


@pytest.fixture
def loss_config():
    return LossConfig()


@pytest.fixture
def micro_train_config():
    return TrainConfig(seed=0, epochs=2, batch_size=4, learning_rate=0.01, momentum=0.9, grad_clip=1.0)


@pytest.fixture
def micro_scenes(micro_scene_config):
    return generate_dataset(micro_scene_config)


@functools.lru_cache(maxsize=None)
def injections(size, count):
    return np.array(list(itertools.permutations(range(size), count)))


@pytest.fixture
def brute_force_min_cost():
    """Minimum total cost over all injective GT -> prediction assignments."""

    def solve(cost):
        num_pred, num_gt = cost.shape
        if num_gt == 0:
            return 0.0
        perms = injections(num_pred, num_gt)
        return float(cost[perms, np.arange(num_gt)].sum(axis=1).min())
    return solve


@pytest.fixture
def brute_force_matched_count():
    """Largest number of GT boxes matched one-to-one with overlap >= threshold."""

    def solve(overlaps, threshold):
        ok = np.asarray(overlaps) >= threshold
        num_pred, num_gt = ok.shape
        if num_pred == 0 or num_gt == 0:
            return 0
        if num_pred >= num_gt:
            perms = injections(num_pred, num_gt)
            return int(ok[perms, np.arange(num_gt)].sum(axis=1).max())
        perms = injections(num_gt, num_pred)
        return int(ok[np.arange(num_pred), perms].sum(axis=1).max())
    return solve
