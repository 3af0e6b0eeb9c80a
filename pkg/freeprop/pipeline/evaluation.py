import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..core import numerics as nx
from ..core.enums import MatchingMode
from ..core.errors import ConfigError
from ..core.geometry import IOU_THRESHOLDS, Annotation, BoxXYXY, RecallReport, average_recall
from ..data.synthdata import Scene
from ..modules.csp import CspConfig
from ..services.workers import map_ordered
from .model import ModelConfig, ModelParams, Proposal, forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    budgets: Tuple[int, ...] = (1, 10, 32)
    # optimal one-to-one matching; "greedy" is the highest-IoU-first evaluator variant
    matching: str = MatchingMode.OPTIMAL.value
    held_out: int = 100
    workers: int = 0

    def validate(self, section: str='eval') -> None:
        if not self.budgets or any(int(k) < 1 for k in self.budgets):
            raise ConfigError(f'{section}.budgets', 'proposal budgets must be a non-empty list of integers >= 1')
        try:
            MatchingMode(self.matching)
        except ValueError:
            raise ConfigError(f'{section}.matching', f"matching must be one of {[m.value for m in MatchingMode]}, got {self.matching!r}")
        if self.held_out < 0:
            raise ConfigError(f'{section}.held_out', 'held-out scene count must be non-negative')
        if self.workers < 0:
            raise ConfigError(f'{section}.workers', 'worker count must be non-negative')


@dataclass
class EvalReport:
    by_budget: Dict[int, RecallReport] = field(default_factory=dict)
    num_images: int = 0

    def ar(self, budget: int) -> float:
        return self.by_budget[budget].ar

    def to_dict(self) -> dict:
        return {
            'num_images': self.num_images,
            'budgets': {f'AR@{k}': report.to_dict() for k, report in sorted(self.by_budget.items())},
        }


def evaluate_proposals(proposals_per_image: Sequence[Sequence[BoxXYXY]], ground_truth: Sequence[Annotation], budgets: Sequence[int], matching: MatchingMode=MatchingMode.OPTIMAL, thresholds: Sequence[float]=IOU_THRESHOLDS) -> EvalReport:
    """AR table for already ranked proposals."""
    report = EvalReport(num_images=len(ground_truth))
    for budget in sorted(set(int(k) for k in budgets)):
        report.by_budget[budget] = average_recall(proposals_per_image, ground_truth, budget, thresholds, MatchingMode(matching))
    return report


def propose(image, params: ModelParams, model: ModelConfig, csp: CspConfig) -> List[Proposal]:
    with nx.no_grad():
        return forward(image, params, model, csp).proposals


def evaluate(params: ModelParams, scenes: Sequence[Scene], model: ModelConfig, csp: CspConfig, config: Optional[EvalConfig]=None) -> EvalReport:
    config = config or EvalConfig()
    start = time.perf_counter()
    proposals = map_ordered(lambda scene: propose(scene.image, params, model, csp), scenes, workers=config.workers, name='evaluate')
    elapsed = time.perf_counter() - start
    if scenes:
        logger.info(f'Forward passes: {1000.0 * elapsed / len(scenes):.1f} ms/img over {len(scenes)} scenes')
    report = evaluate_proposals([[p.box for p in ranked] for ranked in proposals], [scene.annotation for scene in scenes], config.budgets, MatchingMode(config.matching))
    for budget, recall in sorted(report.by_budget.items()):
        logger.info(f'AR@{budget} = {recall.ar:.4f} (s {recall.ar_small}, m {recall.ar_medium}, l {recall.ar_large})')
    return report
