"""Set-prediction objective.

Predictions are assigned one-to-one to ground-truth boxes by minimum-cost
bipartite matching; the assignment is then held fixed while the regression,
classification, router-balance and centerness terms are differentiated.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import expit

from ..core import numerics as nx
from ..core.errors import ConfigError, InvalidArgumentError, NonFiniteLossError
from ..core.geometry import BoxCCWH, pairwise_giou
from ..core.numerics import Tensor

GIOU_EPS = 1e-12

# ccwh @ _CCWH_TO_XYXY -> xyxy
_CCWH_TO_XYXY = np.array([
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 1.0],
    [-0.5, 0.0, 0.5, 0.0],
    [0.0, -0.5, 0.0, 0.5],
])


@dataclass(frozen=True)
class LossConfig:
    lambda_ctr: float = 5.0
    weight_l1: float = 5.0
    weight_giou: float = 2.0
    cost_class: float = 2.0
    cost_bbox: float = 5.0
    cost_giou: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    token_loss: bool = True

    def validate(self, section: str='loss') -> None:
        for name in ('lambda_ctr', 'weight_l1', 'weight_giou', 'cost_class', 'cost_bbox', 'cost_giou', 'focal_gamma'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ConfigError(f'{section}.{name}', f'{name.replace("_", " ")} must be a finite non-negative number')
        if not 0.0 <= self.focal_alpha <= 1.0:
            raise ConfigError(f'{section}.focal_alpha', 'focal alpha must lie in [0, 1]')

    @property
    def regression_weights(self) -> Tuple[float, float]:
        return self.weight_l1, self.weight_giou


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int]]
    unmatched: List[int]

    @property
    def predictions(self) -> List[int]:
        return [p for p, _ in self.pairs]

    @property
    def ground_truth(self) -> List[int]:
        return [g for _, g in self.pairs]

    def cost(self, matrix: np.ndarray) -> float:
        return float(sum(matrix[p, g] for p, g in self.pairs))


class LossParts(NamedTuple):
    reg: float
    cls: float
    rt: float
    ctr: float


@dataclass(frozen=True)
class LossBreakdown:
    reg: float
    cls: float
    rt: float
    ctr: float
    total: float
    lambda_: float

    def to_dict(self) -> Dict[str, float]:
        return {'reg': self.reg, 'cls': self.cls, 'rt': self.rt, 'ctr': self.ctr, 'total': self.total, 'lambda': self.lambda_}

    @classmethod
    def mean(cls, items: Sequence['LossBreakdown']) -> 'LossBreakdown':
        if not items:
            raise InvalidArgumentError('cannot average an empty list of losses')
        count = float(len(items))
        return cls(
            reg=float(np.sum([b.reg for b in items]) / count),
            cls=float(np.sum([b.cls for b in items]) / count),
            rt=float(np.sum([b.rt for b in items]) / count),
            ctr=float(np.sum([b.ctr for b in items]) / count),
            total=float(np.sum([b.total for b in items]) / count),
            lambda_=items[0].lambda_,
        )


def hungarian_match(cost: np.ndarray) -> MatchResult:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise InvalidArgumentError(f'cost matrix must be 2-D, got shape {cost.shape}')
    num_pred, num_gt = cost.shape
    if num_pred < num_gt:
        raise InvalidArgumentError(f'{num_pred} predictions cannot cover {num_gt} ground-truth boxes')
    if not np.all(np.isfinite(cost)):
        raise InvalidArgumentError('cost matrix contains non-finite entries')
    if num_gt == 0:
        return MatchResult([], list(range(num_pred)))
    rows, cols = linear_sum_assignment(cost)
    pairs = sorted((int(r), int(c)) for r, c in zip(rows, cols))
    taken = {p for p, _ in pairs}
    return MatchResult(pairs, [p for p in range(num_pred) if p not in taken])


def _ccwh_array(boxes: Union[np.ndarray, Sequence[BoxCCWH]]) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return boxes.reshape(-1, 4).astype(np.float64)
    return np.array([box.as_list() for box in boxes], dtype=np.float64).reshape(-1, 4)


def _ccwh_to_xyxy(boxes: np.ndarray) -> np.ndarray:
    return boxes @ _CCWH_TO_XYXY


def focal_class_cost(logits: np.ndarray, alpha: float, gamma: float) -> np.ndarray:
    """Per-prediction cost of calling it an object, relative to calling it background."""
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    prob = expit(logits)
    neg = (1.0 - alpha) * prob ** gamma * np.logaddexp(0.0, logits)
    pos = alpha * (1.0 - prob) ** gamma * np.logaddexp(0.0, -logits)
    return pos - neg


def build_cost_matrix(logits: np.ndarray, pred_boxes: np.ndarray, gt_boxes: np.ndarray, config: LossConfig) -> np.ndarray:
    pred = _ccwh_array(pred_boxes)
    gt = _ccwh_array(gt_boxes)
    class_cost = focal_class_cost(logits, config.focal_alpha, config.focal_gamma)[:, None]
    l1_cost = cdist(pred, gt, metric='cityblock') if len(gt) else np.zeros((len(pred), 0))
    giou_cost = 1.0 - pairwise_giou(_ccwh_to_xyxy(pred), _ccwh_to_xyxy(gt))
    return config.cost_class * class_cost + config.cost_bbox * l1_cost + config.cost_giou * giou_cost


def match_predictions(logits: np.ndarray, pred_boxes: np.ndarray, gt_boxes: np.ndarray, config: LossConfig) -> MatchResult:
    return hungarian_match(build_cost_matrix(logits, pred_boxes, gt_boxes, config))


def sigmoid_focal_loss(logits: Tensor, targets: np.ndarray, alpha: float=0.25, gamma: float=2.0) -> Tensor:
    """Element-wise focal loss for binary targets."""
    logits = nx.as_tensor(logits)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise InvalidArgumentError(f'{logits.shape} logits vs {targets.shape} targets')
    ce = nx.sub(nx.softplus(logits), nx.mul(logits, targets))
    prob = nx.sigmoid(logits)
    p_t = nx.add(nx.mul(prob, targets), nx.mul(nx.sub(1.0, prob), 1.0 - targets))
    alpha_t = alpha * targets + (1.0 - alpha) * (1.0 - targets)
    modulator = nx.power(nx.sub(1.0, p_t), gamma)
    return nx.mul(nx.mul(modulator, ce), alpha_t)


def classification_loss(logits: Tensor, matched: Sequence[int], alpha: float=0.25, gamma: float=2.0) -> Tensor:
    logits = nx.as_tensor(logits)
    targets = np.zeros(logits.shape)
    chosen = list(matched)
    targets[chosen] = 1.0
    per_element = sigmoid_focal_loss(logits, targets, alpha, gamma)
    return nx.mul(nx.sum(per_element), 1.0 / max(1, len(chosen)))


def paired_giou(pred_ccwh: Tensor, gt_ccwh: np.ndarray) -> Tensor:
    """Row-wise GIoU of an (M,4) ccwh tensor against (M,4) ccwh targets."""
    pred = nx.matmul(nx.as_tensor(pred_ccwh), _CCWH_TO_XYXY)
    gt = _ccwh_to_xyxy(np.asarray(gt_ccwh, dtype=np.float64).reshape(-1, 4))
    px1, py1, px2, py2 = (nx.take(pred, [i], axis=1) for i in range(4))
    gx1, gy1, gx2, gy2 = (gt[:, i:i + 1] for i in range(4))
    inter = nx.mul(
        nx.relu(nx.sub(nx.minimum(px2, gx2), nx.maximum(px1, gx1))),
        nx.relu(nx.sub(nx.minimum(py2, gy2), nx.maximum(py1, gy1))),
    )
    area_p = nx.mul(nx.sub(px2, px1), nx.sub(py2, py1))
    area_g = (gx2 - gx1) * (gy2 - gy1)
    union = nx.sub(nx.add(area_p, area_g), inter)
    hull = nx.mul(
        nx.sub(nx.maximum(px2, gx2), nx.minimum(px1, gx1)),
        nx.sub(nx.maximum(py2, gy2), nx.minimum(py1, gy1)),
    )
    overlap = nx.div(inter, nx.add(union, GIOU_EPS))
    penalty = nx.div(nx.sub(hull, union), nx.add(hull, GIOU_EPS))
    return nx.reshape(nx.sub(overlap, penalty), (pred.shape[0],))


def regression_loss(pred: Union[Tensor, Sequence[BoxCCWH]], gt: Union[np.ndarray, Sequence[BoxCCWH]], weights: Tuple[float, float]=(5.0, 2.0)) -> Tensor:
    pred = pred if isinstance(pred, Tensor) else Tensor(_ccwh_array(pred))
    gt = _ccwh_array(gt)
    if pred.shape[0] != gt.shape[0]:
        raise InvalidArgumentError(f'{pred.shape[0]} matched predictions vs {gt.shape[0]} matched boxes')
    if gt.shape[0] == 0:
        return Tensor(0.0)
    w_l1, w_giou = weights
    l1 = nx.sum(nx.absolute(nx.sub(pred, gt)), axis=1)
    per_pair = nx.add(nx.mul(l1, w_l1), nx.mul(nx.sub(1.0, paired_giou(pred, gt)), w_giou))
    return nx.mean(per_pair)


def total_loss(parts: LossParts, lambda_: float, image_id: Optional[str]=None) -> LossBreakdown:
    parts = LossParts(*(float(p) for p in parts))
    for name, value in parts._asdict().items():
        if not math.isfinite(value):
            raise NonFiniteLossError(image_id if image_id is not None else '?', name, value)
    total = parts.reg + parts.cls + parts.rt + lambda_ * parts.ctr
    return LossBreakdown(parts.reg, parts.cls, parts.rt, parts.ctr, total, float(lambda_))


def combine_losses(reg: Tensor, cls: Tensor, rt: Tensor, ctr: Tensor, lambda_: float, image_id: Optional[str]=None) -> Tuple[Tensor, LossBreakdown]:
    """Differentiable total plus its float breakdown; non-finite parts raise."""
    breakdown = total_loss(LossParts(reg.item(), cls.item(), rt.item(), ctr.item()), lambda_, image_id)
    total = nx.add(nx.add(nx.add(reg, cls), rt), nx.mul(ctr, lambda_))
    return total, breakdown
