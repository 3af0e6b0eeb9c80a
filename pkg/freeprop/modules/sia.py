"""Sparse image-aware adapter.

A router MLP scores the globally pooled feature of every pyramid level, the
top-k levels are kept, and the learnable embedding cross-attends to each kept
level (pooled token first, then the flattened grid). The attention outputs
are mixed with the softmax of the kept router scores.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..core import numerics as nx
from ..core.errors import InvalidArgumentError
from ..core.numerics import Tensor
from .params import ParameterGroup, init_bias, init_weight

NUM_LEVELS = 4


@dataclass
class LevelFeatures:
    level: int
    tokens: Tensor
    height: int
    width: int
    stride: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise InvalidArgumentError(f'level {self.level}: empty grid {self.height}x{self.width}')
        if self.tokens.shape[0] != self.height * self.width:
            raise InvalidArgumentError(f'level {self.level}: {self.tokens.shape[0]} tokens for a {self.height}x{self.width} grid')

    @property
    def channels(self) -> int:
        return self.tokens.shape[1]

    def cell_centers(self) -> np.ndarray:
        """Normalized (x, y) of every cell center, row-major."""
        rows, cols = np.mgrid[0:self.height, 0:self.width]
        return np.stack([(cols.reshape(-1) + 0.5) / self.width, (rows.reshape(-1) + 0.5) / self.height], axis=1)


@dataclass
class LearnableEmbedding:
    vector: Tensor
    refined: Optional[Tensor] = None

    def __post_init__(self):
        if self.refined is None:
            self.refined = self.vector


@dataclass
class RouterOutput:
    raw_weights: Tensor
    selected: List[int]
    normalized: Tensor = field(repr=False)


@dataclass
class SiaParams(ParameterGroup):
    router_w1: Tensor
    router_b1: Tensor
    router_w2: Tensor
    router_b2: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int) -> 'SiaParams':
        hidden = 2 * channels
        return cls(
            router_w1=init_weight(rng, (channels, hidden)),
            router_b1=init_bias((hidden,)),
            router_w2=init_weight(rng, (hidden, 1)),
            router_b2=init_bias((1,)),
            w_q=init_weight(rng, (channels, channels)),
            w_k=init_weight(rng, (channels, channels)),
            w_v=init_weight(rng, (channels, channels)),
            w_o=init_weight(rng, (channels, channels)),
        )


def pool_levels(levels: Sequence[LevelFeatures]) -> List[Tensor]:
    channels = {level.channels for level in levels}
    if len(channels) != 1:
        raise InvalidArgumentError(f'levels disagree on channel count: {sorted(channels)}')
    return [nx.mean(level.tokens, axis=0, keepdims=True) for level in levels]


def select_levels(raw_weights: Tensor, k: int, selected: Optional[Sequence[int]]=None) -> RouterOutput:
    """Keep the k largest raw weights (1-based level ids) and softmax them."""
    if not 1 <= k <= NUM_LEVELS:
        raise InvalidArgumentError(f'k must lie in 1..{NUM_LEVELS}, got {k}')
    raw_weights = nx.as_tensor(raw_weights)
    if selected is None:
        positions = nx.topk_indices(raw_weights, k)
    else:
        positions = [level - 1 for level in selected]
    normalized = nx.softmax(nx.take(raw_weights, positions))
    return RouterOutput(raw_weights, [p + 1 for p in positions], normalized)


def route_and_select(pooled: Sequence[Tensor], params: SiaParams, k: int, selected: Optional[Sequence[int]]=None) -> RouterOutput:
    stacked = nx.concat(pooled, axis=0)
    hidden = nx.relu(nx.linear(stacked, params.router_w1, params.router_b1))
    raw = nx.reshape(nx.linear(hidden, params.router_w2, params.router_b2), (len(pooled),))
    return select_levels(raw, k, selected)


def attend(query: Tensor, sequence: Tensor, params: SiaParams) -> Tensor:
    out = nx.scaled_dot_attention(query @ params.w_q, sequence @ params.w_k, sequence @ params.w_v)
    return out @ params.w_o


def sia_update(embedding: LearnableEmbedding, levels: Sequence[LevelFeatures], router_out: RouterOutput, params: SiaParams) -> Tensor:
    by_level = {level.level: level for level in levels}
    result: Optional[Tensor] = None
    for slot, level_id in enumerate(router_out.selected):
        if level_id not in by_level:
            raise InvalidArgumentError(f'router selected level {level_id}, which is not among the inputs')
        level = by_level[level_id]
        sequence = nx.concat([nx.mean(level.tokens, axis=0, keepdims=True), level.tokens], axis=0)
        term = nx.mul(nx.take(router_out.normalized, [slot]), attend(embedding.vector, sequence, params))
        result = term if result is None else nx.add(result, term)
    return result


def router_balance_loss(raw_weights: Tensor) -> Tensor:
    raw_weights = nx.as_tensor(raw_weights)
    if raw_weights.size != NUM_LEVELS:
        raise InvalidArgumentError(f'router balance needs {NUM_LEVELS} weights, got {raw_weights.size}')
    return nx.std(raw_weights)


def similarity_heatmap(state: Tensor, level: LevelFeatures) -> np.ndarray:
    with nx.no_grad():
        cos = nx.cosine_similarity(state.detach(), level.tokens.detach())
    return cos.data.reshape(level.height, level.width)
