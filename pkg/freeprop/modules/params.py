from dataclasses import fields
from typing import Dict, Optional, Tuple

import numpy as np

from ..core.numerics import Tensor


def init_weight(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: Optional[int]=None) -> Tensor:
    fan_in = fan_in if fan_in is not None else shape[0]
    return Tensor(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape), requires_grad=True)


BIAS_INIT = 0.01


def init_bias(shape: Tuple[int, ...], value: float=BIAS_INIT) -> Tensor:
    # ReLU inputs fed only by a bias stay off the kink at zero
    return Tensor(np.full(shape, value), requires_grad=True)


class ParameterGroup:
    """Mixin for dataclasses whose fields are all trainable tensors."""

    def named_tensors(self, prefix: str='') -> Dict[str, Tensor]:
        return {f'{prefix}{f.name}': getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_named(cls, tensors: Dict[str, Tensor], prefix: str=''):
        return cls(**{f.name: tensors[f'{prefix}{f.name}'] for f in fields(cls)})
