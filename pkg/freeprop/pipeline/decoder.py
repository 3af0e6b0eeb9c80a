"""Query decoder: self-attention over queries, cross-attention to memory, feed-forward."""
from dataclasses import dataclass
from typing import List, Union

import numpy as np

from ..core import numerics as nx
from ..core.errors import InvalidArgumentError
from ..core.numerics import Tensor
from ..modules.params import ParameterGroup, init_bias, init_weight

POSITION_TEMPERATURE = 10000.0
REFERENCE_BASE_SIZE = 0.05
INVERSE_SIGMOID_EPS = 1e-5


def position_encoding(positions: np.ndarray, channels: int) -> np.ndarray:
    """Sinusoidal encoding of normalized (x, y): [sin x, cos x, sin y, cos y] blocks."""
    if channels % 4 != 0:
        raise InvalidArgumentError(f'position encoding needs channels divisible by 4, got {channels}')
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    quarter = channels // 4
    freqs = 1.0 / POSITION_TEMPERATURE ** (np.arange(quarter) / quarter)
    x = 2.0 * np.pi * positions[:, 0:1] * freqs[None, :]
    y = 2.0 * np.pi * positions[:, 1:2] * freqs[None, :]
    return np.concatenate([np.sin(x), np.cos(x), np.sin(y), np.cos(y)], axis=1)


def reference_boxes(positions: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """ccwh anchors: the cell center with a square size that doubles per level."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    size = REFERENCE_BASE_SIZE * 2.0 ** (np.asarray(levels, dtype=np.float64) - 1.0)
    return np.concatenate([positions, size[:, None], size[:, None]], axis=1)


def inverse_sigmoid(values: np.ndarray) -> np.ndarray:
    clipped = np.clip(values, INVERSE_SIGMOID_EPS, 1.0 - INVERSE_SIGMOID_EPS)
    return np.log(clipped / (1.0 - clipped))


@dataclass
class DecoderLayerParams(ParameterGroup):
    self_q: Tensor
    self_k: Tensor
    self_v: Tensor
    self_o: Tensor
    cross_q: Tensor
    cross_k: Tensor
    cross_v: Tensor
    cross_o: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int) -> 'DecoderLayerParams':
        square = (channels, channels)
        return cls(
            self_q=init_weight(rng, square),
            self_k=init_weight(rng, square),
            self_v=init_weight(rng, square),
            self_o=init_weight(rng, square),
            cross_q=init_weight(rng, square),
            cross_k=init_weight(rng, square),
            cross_v=init_weight(rng, square),
            cross_o=init_weight(rng, square),
            ffn_w1=init_weight(rng, (channels, 2 * channels)),
            ffn_b1=init_bias((2 * channels,)),
            ffn_w2=init_weight(rng, (2 * channels, channels)),
            ffn_b2=init_bias((channels,)),
        )


@dataclass
class BoxHeadParams(ParameterGroup):
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int) -> 'BoxHeadParams':
        # small start keeps initial boxes near their reference
        return cls(w=Tensor(0.1 * init_weight(rng, (channels, 4)).data, requires_grad=True), b=init_bias((4,)))


def decoder_layer(queries: Tensor, query_pos: np.ndarray, memory: Tensor, memory_pos: np.ndarray, params: DecoderLayerParams) -> Tensor:
    positioned = nx.add(queries, query_pos)
    attended = nx.scaled_dot_attention(positioned @ params.self_q, positioned @ params.self_k, queries @ params.self_v)
    x = nx.layer_norm(nx.add(queries, attended @ params.self_o))
    keys = nx.add(memory, memory_pos)
    attended = nx.scaled_dot_attention(nx.add(x, query_pos) @ params.cross_q, keys @ params.cross_k, memory @ params.cross_v)
    x = nx.layer_norm(nx.add(x, attended @ params.cross_o))
    hidden = nx.relu(nx.linear(x, params.ffn_w1, params.ffn_b1))
    return nx.layer_norm(nx.add(x, nx.linear(hidden, params.ffn_w2, params.ffn_b2)))


def decode(queries: Tensor, query_pos: np.ndarray, memory: Tensor, memory_pos: np.ndarray, layers: List[DecoderLayerParams]) -> Tensor:
    x = queries
    for params in layers:
        x = decoder_layer(x, query_pos, memory, memory_pos, params)
    return x


def box_logits(hidden: Tensor, reference_logits: Union[Tensor, np.ndarray], params: BoxHeadParams) -> Tensor:
    """Boxes in inverse-sigmoid space: predicted deltas plus the reference."""
    return nx.add(nx.linear(hidden, params.w, params.b), reference_logits)
