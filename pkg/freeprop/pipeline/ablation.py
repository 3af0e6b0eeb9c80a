"""One-axis sweeps: router top-k, centerness weight, cascade iterations, module switches."""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..core.enums import AblationAxis
from ..data.synthdata import Scene
from ..utils.config import RunConfig
from .evaluation import EvalReport, evaluate
from .training import train

logger = logging.getLogger(__name__)

K_VALUES = (1, 2, 3, 4)
LAMBDA_VALUES = (1.0, 3.0, 5.0, 7.0, 9.0)
ITERATION_VALUES = (0, 1, 2, 3)
MODULE_VARIANTS = ('full', 'no_sia', 'no_csp', 'no_cgqs')


@dataclass
class AblationRow:
    axis: str
    value: Any
    config: Dict[str, Dict[str, Any]]
    report: EvalReport
    final_loss: float

    def to_dict(self) -> dict:
        return {'axis': self.axis, 'value': self.value, 'final_loss': self.final_loss, 'report': self.report.to_dict(), 'config': self.config}


@dataclass
class AblationTable:
    axis: str
    rows: List[AblationRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {'axis': self.axis, 'rows': [row.to_dict() for row in self.rows]}

    def summary(self, budget: int) -> List[Tuple[Any, float]]:
        return [(row.value, row.report.ar(budget)) for row in self.rows]


def axis_variants(axis: AblationAxis, base: RunConfig) -> List[Tuple[Any, RunConfig]]:
    axis = AblationAxis(axis)
    if axis is AblationAxis.K:
        return [(k, base.with_changes('model', top_k=k)) for k in K_VALUES]
    if axis is AblationAxis.LAMBDA:
        return [(lam, base.with_changes('loss', lambda_ctr=lam)) for lam in LAMBDA_VALUES]
    if axis is AblationAxis.ITERATIONS:
        return [(it, base.with_changes('csp', iterations=it)) for it in ITERATION_VALUES]
    return [
        ('full', base),
        ('no_sia', base.with_changes('model', use_sia=False)),
        ('no_csp', base.with_changes('csp', iterations=0)),
        ('no_cgqs', base.with_changes('model', use_cgqs=False)),
    ]


def run_ablation(axis: AblationAxis, base: RunConfig, train_scenes: Sequence[Scene], eval_scenes: Sequence[Scene], values: Optional[Sequence[Any]]=None) -> AblationTable:
    """Train and evaluate one row per setting; every row starts from the same seed and data."""
    axis = AblationAxis(axis)
    table = AblationTable(axis.value)
    for value, config in axis_variants(axis, base):
        if values is not None and value not in values:
            continue
        config.validate()
        logger.info(f"Ablation '{axis.value}' = {value}: training")
        result = train(train_scenes, config.train, config.model, config.csp, config.loss)
        start = time.perf_counter()
        report = evaluate(result.params, eval_scenes, config.model, config.csp, config.eval)
        if axis is AblationAxis.ITERATIONS and eval_scenes:
            logger.info(f'Iterations {value}: {1000.0 * (time.perf_counter() - start) / len(eval_scenes):.1f} ms/img')
        table.rows.append(AblationRow(axis.value, value, config.to_dict(), report, result.epochs[-1].total))
    return table
