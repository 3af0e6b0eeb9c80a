from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .enums import MatchingMode
from .errors import InvalidArgumentError

IOU_THRESHOLDS: Tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
SMALL_AREA = (1.0 / 16.0) ** 2
LARGE_AREA = (1.0 / 4.0) ** 2


@dataclass(frozen=True)
class BoxXYXY:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidArgumentError(f'inverted box {self.as_list()}')

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def to_ccwh(self) -> 'BoxCCWH':
        return BoxCCWH((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0, self.x2 - self.x1, self.y2 - self.y1)


@dataclass(frozen=True)
class BoxCCWH:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise InvalidArgumentError(f'negative box size ({self.w}, {self.h})')

    def as_list(self) -> List[float]:
        return [self.cx, self.cy, self.w, self.h]

    def to_xyxy(self) -> BoxXYXY:
        return BoxXYXY(self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.cx + self.w / 2.0, self.cy + self.h / 2.0)


@dataclass(frozen=True)
class EdgeDistances:
    l: float
    r: float
    t: float
    b: float


@dataclass
class Annotation:
    boxes: List[BoxXYXY] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.boxes)

    def to_list(self) -> List[List[float]]:
        return [box.as_list() for box in self.boxes]

    @classmethod
    def from_list(cls, rows: Sequence[Sequence[float]]) -> 'Annotation':
        return cls([BoxXYXY(*map(float, row)) for row in rows])


Point = Tuple[float, float]


def box_convert(box: Union[BoxXYXY, BoxCCWH]) -> Union[BoxXYXY, BoxCCWH]:
    if isinstance(box, BoxXYXY):
        return box.to_ccwh()
    if isinstance(box, BoxCCWH):
        return box.to_xyxy()
    raise InvalidArgumentError(f'not a box: {box!r}')


def box_area(box: BoxXYXY) -> float:
    return box.area


def _intersection(a: BoxXYXY, b: BoxXYXY) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    return max(w, 0.0) * max(h, 0.0)


def iou(a: BoxXYXY, b: BoxXYXY) -> float:
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: BoxXYXY, b: BoxXYXY) -> float:
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    hull = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    if hull <= 0.0:
        return 0.0
    overlap = inter / union if union > 0.0 else 0.0
    return overlap - (hull - union) / hull


def _pairwise_overlap(boxes_a: np.ndarray, boxes_b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    w = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0.0, None)
    h = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0.0, None)
    inter = w * h
    union = area_a[:, None] + area_b[None, :] - inter
    hull = (np.maximum(a[:, None, 2], b[None, :, 2]) - np.minimum(a[:, None, 0], b[None, :, 0])) * (np.maximum(a[:, None, 3], b[None, :, 3]) - np.minimum(a[:, None, 1], b[None, :, 1]))
    return inter, union, hull, np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)


def pairwise_iou(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """IoU matrix between (P,4) and (G,4) xyxy arrays; degenerate pairs give 0."""
    return _pairwise_overlap(boxes_a, boxes_b)[3]


def pairwise_giou(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    _, union, hull, overlap = _pairwise_overlap(boxes_a, boxes_b)
    penalty = np.divide(hull - union, hull, out=np.zeros_like(hull), where=hull > 0.0)
    return np.where(hull > 0.0, overlap - penalty, 0.0)


def edge_distances(point: Point, box: BoxXYXY) -> EdgeDistances:
    x, y = point
    return EdgeDistances(x - box.x1, box.x2 - x, y - box.y1, box.y2 - y)


def point_in_box(point: Point, box: BoxXYXY) -> bool:
    x, y = point
    return box.x1 <= x <= box.x2 and box.y1 <= y <= box.y2


def centerness_target(point: Point, box: BoxXYXY) -> float:
    """sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b)); 0 outside the box or for flat boxes."""
    if not point_in_box(point, box) or box.width <= 0.0 or box.height <= 0.0:
        return 0.0
    d = edge_distances(point, box)
    horizontal = min(d.l, d.r) / max(d.l, d.r)
    vertical = min(d.t, d.b) / max(d.t, d.b)
    return float(np.sqrt(horizontal * vertical))


def size_bucket(box: BoxXYXY) -> str:
    area = box_area(box)
    if area < SMALL_AREA:
        return 'small'
    if area < LARGE_AREA:
        return 'medium'
    return 'large'


@dataclass
class RecallReport:
    ar: float
    ar_small: Optional[float]
    ar_medium: Optional[float]
    ar_large: Optional[float]
    recall_per_threshold: Dict[float, float]
    num_ground_truth: int

    def to_dict(self) -> Dict[str, object]:
        return {
            'AR': self.ar,
            'AR_s': self.ar_small,
            'AR_m': self.ar_medium,
            'AR_l': self.ar_large,
            'recall_per_threshold': {f'{t:.2f}': r for t, r in self.recall_per_threshold.items()},
            'num_ground_truth': self.num_ground_truth,
        }


def _greedy_matches(overlaps: np.ndarray, gt_areas: np.ndarray, threshold: float) -> np.ndarray:
    matched = np.zeros(overlaps.shape[1], dtype=bool)
    used = np.zeros(overlaps.shape[0], dtype=bool)
    for g in np.argsort(-gt_areas, kind='stable'):
        candidates = np.where(~used & (overlaps[:, g] >= threshold), overlaps[:, g], -1.0)
        if candidates.size and candidates.max() >= threshold:
            best = int(np.argmax(candidates))
            used[best] = True
            matched[g] = True
    return matched


def _optimal_matches(overlaps: np.ndarray, threshold: float) -> np.ndarray:
    if overlaps.size == 0:
        return np.zeros(overlaps.shape[1], dtype=bool)
    graph = csr_matrix((overlaps.T >= threshold).astype(np.int8))
    assignment = maximum_bipartite_matching(graph, perm_type='column')
    return assignment >= 0


def match_ground_truth(overlaps: np.ndarray, gt_areas: np.ndarray, threshold: float, mode: MatchingMode=MatchingMode.OPTIMAL) -> np.ndarray:
    """Boolean per GT: matched one-to-one by a proposal with IoU >= threshold."""
    if MatchingMode(mode) is MatchingMode.GREEDY:
        return _greedy_matches(overlaps, gt_areas, threshold)
    return _optimal_matches(overlaps, threshold)


def average_recall(proposals_per_image: Sequence[Sequence[BoxXYXY]], ground_truth: Sequence[Annotation], K: int, thresholds: Sequence[float]=IOU_THRESHOLDS, matching: MatchingMode=MatchingMode.OPTIMAL) -> RecallReport:
    if K < 1:
        raise InvalidArgumentError(f'proposal budget K must be >= 1, got {K}')
    if len(proposals_per_image) != len(ground_truth):
        raise InvalidArgumentError('proposals and ground truth cover different numbers of images')
    buckets = ('small', 'medium', 'large')
    hits = {b: np.zeros(len(thresholds)) for b in buckets}
    totals = {b: 0 for b in buckets}
    for proposals, annotation in zip(proposals_per_image, ground_truth):
        if len(annotation) == 0:
            continue
        gt = np.array(annotation.to_list(), dtype=np.float64)
        top = np.array([p.as_list() for p in list(proposals)[:K]], dtype=np.float64).reshape(-1, 4)
        overlaps = pairwise_iou(top, gt)
        areas = (gt[:, 2] - gt[:, 0]) * (gt[:, 3] - gt[:, 1])
        labels = [size_bucket(box) for box in annotation.boxes]
        for label in labels:
            totals[label] += 1
        for t_index, threshold in enumerate(thresholds):
            matched = match_ground_truth(overlaps, areas, threshold, matching)
            for label, hit in zip(labels, matched):
                hits[label][t_index] += float(hit)
    total = sum(totals.values())
    if total == 0:
        per_threshold = {float(t): 0.0 for t in thresholds}
        return RecallReport(0.0, None, None, None, per_threshold, 0)
    overall = (hits['small'] + hits['medium'] + hits['large']) / total
    per_bucket = {b: float(np.mean(hits[b] / totals[b])) if totals[b] else None for b in buckets}
    return RecallReport(float(np.mean(overall)), per_bucket['small'], per_bucket['medium'], per_bucket['large'], {float(t): float(r) for t, r in zip(thresholds, overall)}, total)
