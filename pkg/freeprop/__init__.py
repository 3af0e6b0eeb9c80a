__version__ = '0.1.0'
from .core.errors import FreepropError, InvalidArgumentError, GradientCheckError, DatasetError, CheckpointError, ConfigError, NonFiniteLossError
from .core.geometry import BoxXYXY, BoxCCWH, Annotation, iou, giou, centerness_target, average_recall
from .core.numerics import Tensor, GradTape, no_grad, finite_difference_check
from .data.synthdata import SceneConfig, Scene, generate_dataset, read_dataset, read_scene, write_dataset
from .modules.csp import CspConfig
from .modules.matching_loss import LossConfig, LossBreakdown, hungarian_match
from .pipeline.model import ModelConfig, ModelParams, Decisions, forward, image_loss
from .pipeline.training import TrainConfig, train
from .pipeline.evaluation import EvalConfig, evaluate
from .pipeline.checkpoint import save_checkpoint, load_checkpoint
from .utils.config import ConfigManager, RunConfig
from .events.manager import EventManager
from .events.decorators import on_event
from .core.decorators import log_execution
__all__ = ['FreepropError', 'InvalidArgumentError', 'GradientCheckError', 'DatasetError', 'CheckpointError', 'ConfigError', 'NonFiniteLossError', 'BoxXYXY', 'BoxCCWH', 'Annotation', 'iou', 'giou', 'centerness_target', 'average_recall', 'Tensor', 'GradTape', 'no_grad', 'finite_difference_check', 'SceneConfig', 'Scene', 'generate_dataset', 'read_dataset', 'read_scene', 'write_dataset', 'CspConfig', 'LossConfig', 'LossBreakdown', 'hungarian_match', 'ModelConfig', 'ModelParams', 'Decisions', 'forward', 'image_loss', 'TrainConfig', 'train', 'EvalConfig', 'evaluate', 'save_checkpoint', 'load_checkpoint', 'ConfigManager', 'RunConfig', 'EventManager', 'on_event', 'log_execution']
