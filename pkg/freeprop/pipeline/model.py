"""Prompt-free proposal model: backbone, adapter, cascade, query selection, decoder."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from ..core import numerics as nx
from ..core.errors import ConfigError, InvalidArgumentError
from ..core.geometry import Annotation, BoxXYXY
from ..core.numerics import Tensor
from ..modules.cgqs import BY_CLASSIFICATION, BY_COMBINED, CenterNetParams, MemoryTokens, QueryToken, ScoredQueries, assign_center_targets, centerness_loss, score_queries, select_queries
from ..modules.csp import CspConfig, MaskRecord, csp_refine
from ..modules.matching_loss import LossBreakdown, LossConfig, MatchResult, classification_loss, combine_losses, match_predictions, regression_loss
from ..modules.sia import NUM_LEVELS, LearnableEmbedding, LevelFeatures, RouterOutput, SiaParams, pool_levels, route_and_select, router_balance_loss, sia_update
from ..utils.helpers import rng_for
from .backbone import STAGE_CHANNELS, BackboneParams, backbone_forward, check_canvas
from .decoder import BoxHeadParams, DecoderLayerParams, box_logits, decode, inverse_sigmoid, position_encoding, reference_boxes

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    canvas: int = 128
    channels: int = 64
    num_queries: int = 32
    decoder_layers: int = 2
    top_k: int = 2
    stem_stride: int = 2
    backbone_channels: Tuple[int, ...] = STAGE_CHANNELS
    use_sia: bool = True
    use_cgqs: bool = True

    def validate(self, section: str='model') -> None:
        if self.channels < 4 or self.channels % 4 != 0:
            raise ConfigError(f'{section}.channels', 'channel width must be a positive multiple of 4')
        if self.num_queries < 1:
            raise ConfigError(f'{section}.num_queries', 'query budget N must be >= 1')
        if self.decoder_layers < 1:
            raise ConfigError(f'{section}.decoder_layers', 'decoder needs at least one layer')
        if not 1 <= self.top_k <= NUM_LEVELS:
            raise ConfigError(f'{section}.top_k', f'router top k must lie in 1..{NUM_LEVELS}')
        if self.stem_stride < 1:
            raise ConfigError(f'{section}.stem_stride', 'stem stride must be >= 1')
        if len(self.backbone_channels) != NUM_LEVELS or min(self.backbone_channels) < 1:
            raise ConfigError(f'{section}.backbone_channels', f'backbone needs {NUM_LEVELS} positive stage widths')
        try:
            check_canvas(self.canvas, self.stem_stride)
        except InvalidArgumentError as e:
            raise ConfigError(f'{section}.canvas', str(e))


@dataclass
class ModelParams:
    embedding: Tensor
    backbone: BackboneParams
    sia: SiaParams
    center: CenterNetParams
    decoder: List[DecoderLayerParams]
    box_head: BoxHeadParams
    token_head: BoxHeadParams

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> 'ModelParams':
        rng = rng_for(seed, 0)
        channels = config.channels
        return cls(
            embedding=Tensor(rng.normal(0.0, 1.0, size=(1, channels)), requires_grad=True),
            backbone=BackboneParams.init(rng, channels, config.backbone_channels),
            sia=SiaParams.init(rng, channels),
            center=CenterNetParams.init(rng, channels),
            decoder=[DecoderLayerParams.init(rng, channels) for _ in range(config.decoder_layers)],
            box_head=BoxHeadParams.init(rng, channels),
            token_head=BoxHeadParams.init(rng, channels),
        )

    @property
    def channels(self) -> int:
        return self.embedding.shape[1]

    def named_tensors(self) -> Dict[str, Tensor]:
        named = {'embedding': self.embedding}
        named.update(self.backbone.named_tensors('backbone.'))
        named.update(self.sia.named_tensors('sia.'))
        named.update(self.center.named_tensors('center.'))
        for i, layer in enumerate(self.decoder):
            named.update(layer.named_tensors(f'decoder.{i}.'))
        named.update(self.box_head.named_tensors('box_head.'))
        named.update(self.token_head.named_tensors('token_head.'))
        return named

    def tensors(self) -> List[Tensor]:
        return list(self.named_tensors().values())

    @classmethod
    def from_named(cls, tensors: Dict[str, Tensor]) -> 'ModelParams':
        try:
            layers = sorted({int(name.split('.')[1]) for name in tensors if name.startswith('decoder.')})
        except (IndexError, ValueError):
            raise InvalidArgumentError('malformed decoder parameter name')
        if layers != list(range(len(layers))):
            raise InvalidArgumentError(f'decoder layers are not contiguous: {layers}')
        try:
            return cls(
                embedding=tensors['embedding'],
                backbone=BackboneParams.from_named(tensors, 'backbone.'),
                sia=SiaParams.from_named(tensors, 'sia.'),
                center=CenterNetParams.from_named(tensors, 'center.'),
                decoder=[DecoderLayerParams.from_named(tensors, f'decoder.{i}.') for i in layers],
                box_head=BoxHeadParams.from_named(tensors, 'box_head.'),
                token_head=BoxHeadParams.from_named(tensors, 'token_head.'),
            )
        except KeyError as e:
            raise InvalidArgumentError(f'missing parameter {e.args[0]}') from e

    def copy(self) -> 'ModelParams':
        return ModelParams.from_named({name: Tensor(t.data.copy(), requires_grad=True) for name, t in self.named_tensors().items()})


@dataclass
class Decisions:
    """Discrete choices of one forward pass; passing them back replays that branch."""
    levels: Optional[List[int]] = None
    csp_masks: Optional[List[np.ndarray]] = None
    queries: Optional[List[int]] = None
    matching: Optional[MatchResult] = None
    token_matching: Optional[MatchResult] = None


@dataclass
class Proposal:
    box: BoxXYXY
    score: float
    query: int

    def to_dict(self) -> dict:
        return {'box': self.box.as_list(), 'score': self.score}


@dataclass
class ForwardResult:
    proposals: List[Proposal]
    boxes: Tensor
    cls_logits: Tensor
    levels: List[LevelFeatures]
    embedding_sia: Tensor
    embedding_final: Tensor
    router: Optional[RouterOutput]
    balance: Tensor
    masks: MaskRecord
    memory: MemoryTokens
    scored: ScoredQueries
    token_boxes: Tensor
    selected: List[QueryToken] = field(repr=False)

    def decisions(self) -> Decisions:
        return Decisions(
            levels=list(self.router.selected) if self.router is not None else None,
            csp_masks=self.masks.masks(),
            queries=[token.index for token in self.selected],
        )


class LossOutput(NamedTuple):
    total: Tensor
    breakdown: LossBreakdown
    decisions: Decisions


def build_memory(levels: List[LevelFeatures]) -> MemoryTokens:
    features = nx.concat([level.tokens for level in levels], axis=0)
    positions = np.concatenate([level.cell_centers() for level in levels], axis=0)
    level_ids = np.concatenate([np.full(level.height * level.width, level.level) for level in levels])
    return MemoryTokens(features, positions, level_ids, position_encoding(positions, features.shape[1]))


def _ranked_proposals(boxes: np.ndarray, scores: np.ndarray, selected: List[QueryToken]) -> List[Proposal]:
    proposals = []
    for position in sorted(range(len(selected)), key=lambda i: (-scores[i], i)):
        cx, cy, w, h = boxes[position]
        corners = np.clip([cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0], 0.0, 1.0)
        proposals.append(Proposal(BoxXYXY(*(float(c) for c in corners)), float(scores[position]), selected[position].index))
    return proposals


def forward(image: np.ndarray, params: ModelParams, config: ModelConfig, csp: CspConfig=CspConfig(), decisions: Optional[Decisions]=None) -> ForwardResult:
    decisions = decisions or Decisions()
    levels = backbone_forward(image, params.backbone, config.stem_stride)
    router = None
    balance = Tensor(0.0)
    embedding = params.embedding
    if config.use_sia:
        router = route_and_select(pool_levels(levels), params.sia, config.top_k, decisions.levels)
        embedding = sia_update(LearnableEmbedding(params.embedding), levels, router, params.sia)
        balance = router_balance_loss(router.raw_weights)
    refined, masks = csp_refine(embedding, levels, csp, decisions.csp_masks)

    memory = build_memory(levels)
    scored = score_queries(memory, refined, params.center)
    # every token proposes a box around its anchor; selected ones seed the decoder
    token_logits = box_logits(memory.features, inverse_sigmoid(reference_boxes(memory.positions, memory.levels)), params.token_head)
    token_boxes = nx.sigmoid(token_logits)
    tokens = scored.tokens()
    if decisions.queries is not None:
        selected = [tokens[i] for i in decisions.queries]
    else:
        selected = select_queries(tokens, config.num_queries, BY_COMBINED if config.use_cgqs else BY_CLASSIFICATION)
    index = [token.index for token in selected]

    queries = nx.take(memory.features, index)
    query_pos = memory.position_encoding[index]
    hidden = decode(queries, query_pos, memory.features, memory.position_encoding, params.decoder)
    boxes = nx.sigmoid(box_logits(hidden, nx.take(token_logits, index), params.box_head))
    cls_logits = nx.reshape(nx.matmul(hidden, nx.transpose(refined)), (len(index),))

    with nx.no_grad():
        scores = nx.sigmoid(cls_logits.detach()).data
    if config.use_cgqs:
        scores = scores * scored.center_scores.data[index]
    proposals = _ranked_proposals(boxes.data, scores, selected)
    return ForwardResult(proposals, boxes, cls_logits, levels, embedding, refined, router, balance, masks, memory, scored, token_boxes, selected)


def image_loss(image: np.ndarray, annotation: Annotation, params: ModelParams, config: ModelConfig, csp: CspConfig, loss: LossConfig, image_id: str='?', decisions: Optional[Decisions]=None) -> LossOutput:
    """Total objective of one image; matching is computed once and then held fixed."""
    result = forward(image, params, config, csp, decisions)
    taken = result.decisions()
    gt = np.array([box.to_ccwh().as_list() for box in annotation.boxes], dtype=np.float64).reshape(-1, 4)
    if decisions is not None and decisions.matching is not None:
        matching = decisions.matching
    else:
        matching = match_predictions(result.cls_logits.data, result.boxes.data, gt, loss)
    taken.matching = matching

    reg = regression_loss(nx.take(result.boxes, matching.predictions), gt[matching.ground_truth], loss.regression_weights)
    cls = classification_loss(result.cls_logits, matching.predictions, loss.focal_alpha, loss.focal_gamma)
    if loss.token_loss:
        if decisions is not None and decisions.token_matching is not None:
            token_matching = decisions.token_matching
        else:
            token_matching = match_predictions(result.scored.cls_logits.data, result.token_boxes.data, gt, loss)
        taken.token_matching = token_matching
        reg = nx.add(reg, regression_loss(nx.take(result.token_boxes, token_matching.predictions), gt[token_matching.ground_truth], loss.regression_weights))
        cls = nx.add(cls, classification_loss(result.scored.cls_logits, token_matching.predictions, loss.focal_alpha, loss.focal_gamma))
    if config.use_cgqs:
        targets, positives = assign_center_targets(result.memory.positions, annotation)
        ctr = centerness_loss(result.scored.center_scores, targets, positives)
    else:
        ctr = Tensor(0.0)
    total, breakdown = combine_losses(reg, cls, result.balance, ctr, loss.lambda_ctr, image_id)
    return LossOutput(total, breakdown, taken)
