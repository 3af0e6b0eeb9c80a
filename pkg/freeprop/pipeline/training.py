import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.decorators import log_execution
from ..core.enums import OptimizerKind
from ..core.errors import ConfigError, InvalidArgumentError
from ..core.numerics import GradTape
from ..data.synthdata import Scene
from ..events.decorators import CHECKPOINT_SAVED, EPOCH_END, STEP_END
from ..events.manager import EventManager
from ..modules.csp import CspConfig
from ..modules.matching_loss import LossBreakdown, LossConfig
from ..services.workers import map_ordered
from ..utils.helpers import rng_for
from .checkpoint import save_checkpoint
from .model import ModelConfig, ModelParams, image_loss

logger = logging.getLogger(__name__)

CHECKPOINT_PATTERN = 'epoch_{epoch:03d}.pfrp'


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 24
    batch_size: int = 8
    optimizer: str = OptimizerKind.ADAM.value
    learning_rate: float = 0.002
    momentum: float = 0.9
    beta2: float = 0.999
    grad_clip: float = 1.0
    workers: int = 0

    def validate(self, section: str='train') -> None:
        if not math.isfinite(self.learning_rate) or self.learning_rate <= 0.0:
            raise ConfigError(f'{section}.learning_rate', f'learning rate must be positive, got {self.learning_rate}')
        if self.epochs < 1:
            raise ConfigError(f'{section}.epochs', 'epoch count must be >= 1')
        if self.batch_size < 1:
            raise ConfigError(f'{section}.batch_size', 'batch size must be >= 1')
        try:
            OptimizerKind(self.optimizer)
        except ValueError:
            raise ConfigError(f'{section}.optimizer', f"optimizer must be one of {[o.value for o in OptimizerKind]}, got {self.optimizer!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f'{section}.momentum', 'momentum must lie in [0, 1)')
        if not 0.0 <= self.beta2 < 1.0:
            raise ConfigError(f'{section}.beta2', 'second-moment decay must lie in [0, 1)')
        if self.grad_clip < 0.0:
            raise ConfigError(f'{section}.grad_clip', 'gradient clip norm must be non-negative (0 disables clipping)')
        if self.workers < 0:
            raise ConfigError(f'{section}.workers', 'worker count must be non-negative')


@dataclass
class TrainResult:
    params: ModelParams
    epochs: List[LossBreakdown] = field(default_factory=list)
    steps: List[LossBreakdown] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)

    def loss_log(self) -> Dict[str, List[dict]]:
        return {'epochs': [b.to_dict() for b in self.epochs], 'steps': [b.to_dict() for b in self.steps]}


def clip_scale(grads: Dict[str, np.ndarray], grad_clip: float) -> Tuple[float, float]:
    """Global gradient norm and the factor that brings it down to ``grad_clip`` (0 disables)."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if grad_clip > 0.0 and norm > grad_clip:
        return norm, grad_clip / norm
    return norm, 1.0


class MomentumSGD:
    """Heavy-ball gradient descent with optional global-norm clipping."""

    def __init__(self, params: ModelParams, learning_rate: float, momentum: float=0.9, grad_clip: float=0.0):
        self.params = params
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.grad_clip = grad_clip
        self.velocity = {name: np.zeros_like(t.data) for name, t in params.named_tensors().items()}

    def step(self, grads: Dict[str, np.ndarray]) -> float:
        norm, scale = clip_scale(grads, self.grad_clip)
        for name, tensor in self.params.named_tensors().items():
            self.velocity[name] = self.momentum * self.velocity[name] + scale * grads[name]
            tensor.data = tensor.data - self.learning_rate * self.velocity[name]
        return norm


class Adam:
    """Adam with bias-corrected moments and optional global-norm clipping."""

    def __init__(self, params: ModelParams, learning_rate: float, beta1: float=0.9, beta2: float=0.999, grad_clip: float=0.0, eps: float=1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.grad_clip = grad_clip
        self.eps = eps
        self.steps = 0
        self.first = {name: np.zeros_like(t.data) for name, t in params.named_tensors().items()}
        self.second = {name: np.zeros_like(t.data) for name, t in params.named_tensors().items()}

    def step(self, grads: Dict[str, np.ndarray]) -> float:
        norm, scale = clip_scale(grads, self.grad_clip)
        self.steps += 1
        first_correction = 1.0 - self.beta1 ** self.steps
        second_correction = 1.0 - self.beta2 ** self.steps
        for name, tensor in self.params.named_tensors().items():
            grad = scale * grads[name]
            self.first[name] = self.beta1 * self.first[name] + (1.0 - self.beta1) * grad
            self.second[name] = self.beta2 * self.second[name] + (1.0 - self.beta2) * grad * grad
            update = (self.first[name] / first_correction) / (np.sqrt(self.second[name] / second_correction) + self.eps)
            tensor.data = tensor.data - self.learning_rate * update
        return norm


def make_optimizer(params: ModelParams, config: TrainConfig) -> Union[Adam, MomentumSGD]:
    if OptimizerKind(config.optimizer) is OptimizerKind.MOMENTUM:
        return MomentumSGD(params, config.learning_rate, config.momentum, config.grad_clip)
    return Adam(params, config.learning_rate, config.momentum, config.beta2, config.grad_clip)


def image_gradients(scene: Scene, params: ModelParams, model: ModelConfig, csp: CspConfig, loss: LossConfig) -> Tuple[LossBreakdown, Dict[str, np.ndarray]]:
    named = params.named_tensors()
    with GradTape() as tape:
        output = image_loss(scene.image, scene.annotation, params, model, csp, loss, scene.id)
    grads = tape.gradient(output.total, list(named.values()))
    return output.breakdown, dict(zip(named.keys(), grads))


def _batches(order: np.ndarray, batch_size: int) -> List[List[int]]:
    return [[int(i) for i in order[start:start + batch_size]] for start in range(0, len(order), batch_size)]


@log_execution()
def train(scenes: Sequence[Scene], config: TrainConfig, model: ModelConfig, csp: CspConfig, loss: LossConfig, checkpoint_dir: Optional[str]=None, events: Optional[EventManager]=None, params: Optional[ModelParams]=None) -> TrainResult:
    """Mini-batch descent over the scenes; a checkpoint is written after every epoch when a directory is given."""
    if not scenes:
        raise InvalidArgumentError('cannot train on an empty dataset')
    params = params if params is not None else ModelParams.init(model, config.seed)
    optimizer = make_optimizer(params, config)
    result = TrainResult(params)
    step = 0
    logger.info(f'Training on {len(scenes)} scenes for {config.epochs} epochs (batch {config.batch_size}, {config.optimizer} lr {config.learning_rate})')
    for epoch in range(1, config.epochs + 1):
        order = rng_for(config.seed, 1, epoch).permutation(len(scenes))
        epoch_losses: List[LossBreakdown] = []
        for batch in _batches(order, config.batch_size):
            outputs = map_ordered(
                lambda i: image_gradients(scenes[i], params, model, csp, loss),
                batch,
                workers=config.workers,
                name='image_gradients',
            )
            summed = {name: np.zeros_like(t.data) for name, t in params.named_tensors().items()}
            for _, grads in outputs:
                for name, grad in grads.items():
                    summed[name] += grad
            mean_grads = {name: grad / len(batch) for name, grad in summed.items()}
            norm = optimizer.step(mean_grads)
            step += 1
            batch_loss = LossBreakdown.mean([breakdown for breakdown, _ in outputs])
            epoch_losses.extend(breakdown for breakdown, _ in outputs)
            result.steps.append(batch_loss)
            logger.debug(f'Step {step}: loss {batch_loss.total:.6f}, grad norm {norm:.4f}')
            if events is not None:
                events.dispatch(STEP_END, step=step, epoch=epoch, loss=batch_loss, grad_norm=norm)
        epoch_loss = LossBreakdown.mean(epoch_losses)
        result.epochs.append(epoch_loss)
        logger.info(f'Epoch {epoch}/{config.epochs}: total {epoch_loss.total:.6f} (reg {epoch_loss.reg:.4f}, cls {epoch_loss.cls:.4f}, rt {epoch_loss.rt:.4f}, ctr {epoch_loss.ctr:.4f})')
        if events is not None:
            events.dispatch(EPOCH_END, step=step, epoch=epoch, loss=epoch_loss)
        if checkpoint_dir is not None:
            path = save_checkpoint(params, os.path.join(checkpoint_dir, CHECKPOINT_PATTERN.format(epoch=epoch)))
            result.checkpoints.append(path)
            if events is not None:
                events.dispatch(CHECKPOINT_SAVED, step=step, epoch=epoch, path=path)
    return result
