"""Cascade self-prompt: threshold the cosine map of the current embedding
against a level, add the masked average of the activated cells, and sweep
the levels deep to shallow for a number of iterations."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import numerics as nx
from ..core.errors import ConfigError, InvalidArgumentError
from ..core.numerics import Tensor
from .sia import NUM_LEVELS, LevelFeatures


@dataclass(frozen=True)
class CspConfig:
    delta: float = 0.3
    iterations: int = 3
    level_order: Tuple[int, ...] = (4, 3, 2, 1)

    def validate(self, section: str='csp') -> None:
        if not 0.0 <= self.delta < 1.0:
            raise ConfigError(f'{section}.delta', 'similarity threshold delta must lie in [0, 1)')
        if self.iterations < 0:
            raise ConfigError(f'{section}.iterations', 'iteration count must be non-negative')
        if not self.level_order or any(not 1 <= level <= NUM_LEVELS for level in self.level_order):
            raise ConfigError(f'{section}.level_order', f'level order must list levels in 1..{NUM_LEVELS}')


@dataclass
class MaskVisit:
    iteration: int
    level: int
    mask: np.ndarray
    state: np.ndarray

    @property
    def activated(self) -> int:
        return int(self.mask.sum())


@dataclass
class MaskRecord:
    visits: List[MaskVisit] = field(default_factory=list)

    def masks(self) -> List[np.ndarray]:
        return [visit.mask for visit in self.visits]

    def for_iteration(self, iteration: int) -> List[MaskVisit]:
        return [visit for visit in self.visits if visit.iteration == iteration]

    def activated_per_iteration(self) -> List[int]:
        totals: Dict[int, int] = {}
        for visit in self.visits:
            totals[visit.iteration] = totals.get(visit.iteration, 0) + visit.activated
        return [totals[i] for i in sorted(totals)]


def similarity_mask(embedding_state: Tensor, level: LevelFeatures, delta: float) -> np.ndarray:
    with nx.no_grad():
        cos = nx.cosine_similarity(embedding_state.detach(), level.tokens.detach())
    return (cos.data > delta).reshape(level.height, level.width)


def masked_average_pool(mask: np.ndarray, level: LevelFeatures) -> Tensor:
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    if flat.size != level.tokens.shape[0]:
        raise InvalidArgumentError(f'mask with {flat.size} cells for a level with {level.tokens.shape[0]} tokens')
    count = int(flat.sum())
    if count == 0:
        return Tensor(np.zeros((1, level.channels)))
    weights = Tensor((flat / count).reshape(1, -1))
    return nx.matmul(weights, level.tokens)


def csp_refine(embedding: Tensor, levels: Sequence[LevelFeatures], config: CspConfig, masks: Optional[Sequence[np.ndarray]]=None) -> Tuple[Tensor, MaskRecord]:
    """Refine the embedding; ``masks`` replays a previous run's masks in visit order."""
    by_level = {level.level: level for level in levels}
    missing = [level for level in config.level_order if level not in by_level]
    if missing:
        raise InvalidArgumentError(f'cascade order needs levels {missing} that are not provided')
    replay = iter(masks) if masks is not None else None
    record = MaskRecord()
    state = embedding
    for iteration in range(1, config.iterations + 1):
        for level_id in config.level_order:
            level = by_level[level_id]
            mask = next(replay) if replay is not None else similarity_mask(state, level, config.delta)
            record.visits.append(MaskVisit(iteration, level_id, mask, state.data.copy()))
            state = nx.add(state, masked_average_pool(mask, level))
    return state, record
