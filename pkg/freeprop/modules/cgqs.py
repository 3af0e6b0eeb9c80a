"""Centerness-guided query selection."""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..core import numerics as nx
from ..core.errors import InvalidArgumentError
from ..core.geometry import Annotation, centerness_target
from ..core.numerics import Tensor
from .params import ParameterGroup, init_bias, init_weight

BY_COMBINED = 'combined'
BY_CLASSIFICATION = 'cls'


@dataclass
class MemoryTokens:
    """Flattened pyramid: one row per grid cell over all levels."""
    features: Tensor
    positions: np.ndarray
    levels: np.ndarray
    position_encoding: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class QueryToken:
    index: int
    feature: np.ndarray
    position: Tuple[float, float]
    level: int
    cls_score: float
    center_score: float

    @property
    def combined(self) -> float:
        return self.cls_score * self.center_score


@dataclass
class CenterNetParams(ParameterGroup):
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int) -> 'CenterNetParams':
        return cls(w1=init_weight(rng, (channels, channels)), b1=init_bias((channels,)), w2=init_weight(rng, (channels, 1)), b2=init_bias((1,)))


@dataclass
class ScoredQueries:
    cls_logits: Tensor
    center_scores: Tensor
    memory: MemoryTokens

    @property
    def cls_scores(self) -> np.ndarray:
        return nx.sigmoid(self.cls_logits.detach()).data

    @property
    def combined(self) -> np.ndarray:
        return self.cls_scores * self.center_scores.data

    def tokens(self) -> List[QueryToken]:
        cls_scores, center = self.cls_scores, self.center_scores.data
        features = self.memory.features.data
        return [
            QueryToken(i, features[i], (float(self.memory.positions[i, 0]), float(self.memory.positions[i, 1])), int(self.memory.levels[i]), float(cls_scores[i]), float(center[i]))
            for i in range(len(self.memory))
        ]


def center_scores(features: Tensor, params: CenterNetParams) -> Tensor:
    hidden = nx.relu(nx.linear(features, params.w1, params.b1))
    logits = nx.linear(hidden, params.w2, params.b2)
    return nx.reshape(nx.sigmoid(logits), (features.shape[0],))


def score_queries(memory: MemoryTokens, embedding: Tensor, params: CenterNetParams) -> ScoredQueries:
    if memory.features.shape[1] != embedding.shape[-1]:
        raise InvalidArgumentError(f'memory has {memory.features.shape[1]} channels, embedding {embedding.shape[-1]}')
    logits = nx.reshape(nx.matmul(memory.features, nx.reshape(embedding, (-1, 1))), (len(memory),))
    return ScoredQueries(logits, center_scores(memory.features, params), memory)


def select_queries(scored: Sequence[QueryToken], N: int, by: str=BY_COMBINED) -> List[QueryToken]:
    if N < 1:
        raise InvalidArgumentError(f'query budget must be >= 1, got {N}')
    if by == BY_COMBINED:
        key = lambda token: (-token.combined, token.index)
    elif by == BY_CLASSIFICATION:
        key = lambda token: (-token.cls_score, token.index)
    else:
        raise InvalidArgumentError(f'unknown selection key {by!r}')
    return sorted(scored, key=key)[:N]


def assign_center_targets(positions: np.ndarray, annotation: Annotation) -> Tuple[np.ndarray, List[int]]:
    """Centerness target per token from its smallest enclosing GT box, plus the positive indices."""
    targets = np.zeros(positions.shape[0])
    if len(annotation) == 0:
        return targets, []
    boxes = np.array(annotation.to_list())
    x, y = positions[:, 0:1], positions[:, 1:2]
    left, right = x - boxes[None, :, 0], boxes[None, :, 2] - x
    top, bottom = y - boxes[None, :, 1], boxes[None, :, 3] - y
    inside = (left >= 0) & (right >= 0) & (top >= 0) & (bottom >= 0)
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    ranked = np.where(inside, areas[None, :], np.inf)
    owner = np.argmin(ranked, axis=1)
    positives = [int(i) for i in np.nonzero(inside.any(axis=1))[0]]
    for i in positives:
        targets[i] = centerness_target((float(x[i, 0]), float(y[i, 0])), annotation.boxes[int(owner[i])])
    return targets, positives


def centerness_loss(predicted: Tensor, targets: np.ndarray, positives: Sequence[int]) -> Tensor:
    predicted = nx.as_tensor(predicted)
    targets = np.asarray(targets, dtype=np.float64)
    if predicted.shape != targets.shape:
        raise InvalidArgumentError(f'{predicted.shape} predictions vs {targets.shape} targets')
    if len(positives) == 0:
        return Tensor(0.0)
    chosen = list(positives)
    return nx.mean(nx.absolute(nx.sub(nx.take(predicted, chosen), targets[chosen])))
