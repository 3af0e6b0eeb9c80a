"""Toy convolutional feature pyramid."""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..core import numerics as nx
from ..core.errors import InvalidArgumentError
from ..core.numerics import Tensor
from ..modules.params import ParameterGroup, init_bias, init_weight
from ..modules.sia import NUM_LEVELS, LevelFeatures

STAGE_CHANNELS: Tuple[int, ...] = (16, 32, 64, 64)
KERNEL = 3


@dataclass
class BackboneParams(ParameterGroup):
    stem_w: Tensor
    stem_b: Tensor
    stage1_w: Tensor
    stage1_b: Tensor
    stage2_w: Tensor
    stage2_b: Tensor
    stage3_w: Tensor
    stage3_b: Tensor
    stage4_w: Tensor
    stage4_b: Tensor
    proj1_w: Tensor
    proj1_b: Tensor
    proj2_w: Tensor
    proj2_b: Tensor
    proj3_w: Tensor
    proj3_b: Tensor
    proj4_w: Tensor
    proj4_b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int, stage_channels: Sequence[int]=STAGE_CHANNELS) -> 'BackboneParams':
        if len(stage_channels) != NUM_LEVELS:
            raise InvalidArgumentError(f'backbone needs {NUM_LEVELS} stage widths, got {len(stage_channels)}')
        widths = [stage_channels[0]] + list(stage_channels)
        tensors = {
            'stem_w': init_weight(rng, (KERNEL, KERNEL, 3, widths[0]), fan_in=KERNEL * KERNEL * 3),
            'stem_b': init_bias((widths[0],)),
        }
        for i in range(1, NUM_LEVELS + 1):
            cin, cout = widths[i - 1], widths[i]
            tensors[f'stage{i}_w'] = init_weight(rng, (KERNEL, KERNEL, cin, cout), fan_in=KERNEL * KERNEL * cin)
            tensors[f'stage{i}_b'] = init_bias((cout,))
            tensors[f'proj{i}_w'] = init_weight(rng, (cout, channels))
            tensors[f'proj{i}_b'] = init_bias((channels,))
        return cls(**tensors)


def level_strides(stem_stride: int) -> List[int]:
    return [stem_stride * 2 ** i for i in range(1, NUM_LEVELS + 1)]


def check_canvas(canvas: int, stem_stride: int) -> None:
    deepest = level_strides(stem_stride)[-1]
    if canvas % deepest != 0:
        raise InvalidArgumentError(f'canvas {canvas} is not divisible by the deepest stride {deepest}')


def backbone_forward(image: np.ndarray, params: BackboneParams, stem_stride: int=2) -> List[LevelFeatures]:
    """Four levels, shallow to deep, each projected to the common channel width."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3 or image.shape[0] != image.shape[1]:
        raise InvalidArgumentError(f'expected a square RGB image, got shape {image.shape}')
    check_canvas(image.shape[0], stem_stride)
    x = nx.relu(nx.conv2d(image, params.stem_w, params.stem_b, stride=stem_stride, padding=1))
    levels = []
    for i, stride in enumerate(level_strides(stem_stride), start=1):
        x = nx.relu(nx.conv2d(x, getattr(params, f'stage{i}_w'), getattr(params, f'stage{i}_b'), stride=2, padding=1))
        height, width, cin = x.shape
        tokens = nx.linear(nx.reshape(x, (height * width, cin)), getattr(params, f'proj{i}_w'), getattr(params, f'proj{i}_b'))
        levels.append(LevelFeatures(i, tokens, height, width, stride))
    return levels
