"""Figure-style exports: 8-bit PGM/PPM images, each with a JSON sidecar of the raw values."""
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import numerics as nx
from ..core.errors import InvalidArgumentError
from ..modules.cgqs import BY_CLASSIFICATION, BY_COMBINED, QueryToken, select_queries
from ..modules.csp import MaskRecord
from ..modules.sia import LevelFeatures, similarity_heatmap
from ..pipeline.model import ForwardResult, ModelParams
from ..utils.helpers import write_json
from ..utils.imageio import minmax_normalize, upscale, write_pgm, write_ppm

logger = logging.getLogger(__name__)

QUERY_COLOR = np.array([1.0, 0.0, 0.0])
MASK_COLOR = np.array([0.0, 1.0, 0.0])


def _sidecar(image_path: str) -> str:
    return os.path.splitext(image_path)[0] + '.json'


def write_heatmap(path: str, values: np.ndarray, factor: int=1, meta: Optional[dict]=None) -> str:
    """Min-max normalized grayscale map, upscaled by ``factor``."""
    values = np.asarray(values, dtype=np.float64)
    write_pgm(path, upscale(minmax_normalize(values), factor))
    write_json(_sidecar(path), {**(meta or {}), 'shape': list(values.shape), 'values': values.tolist()})
    return path


def draw_points(image: np.ndarray, points: Sequence[Tuple[float, float]], color: np.ndarray, radius: int=1) -> np.ndarray:
    """Copy of ``image`` with a filled square at every normalized (x, y)."""
    canvas = image.copy()
    height, width = canvas.shape[:2]
    for x, y in points:
        col = min(width - 1, max(0, int(x * width)))
        row = min(height - 1, max(0, int(y * height)))
        canvas[max(0, row - radius):row + radius + 1, max(0, col - radius):col + radius + 1] = color
    return canvas


def export_similarity_maps(result: ForwardResult, params: ModelParams, out_dir: str) -> List[str]:
    """Cosine maps of the raw embedding and of the adapter output against every level."""
    written = []
    for level in result.levels:
        for tag, state in (('before', params.embedding), ('after', result.embedding_sia)):
            path = os.path.join(out_dir, f'sia_{tag}_L{level.level}.pgm')
            written.append(write_heatmap(path, similarity_heatmap(state, level), level.stride, {'level': level.level, 'state': tag}))
    return written


def export_csp_masks(image: np.ndarray, record: MaskRecord, levels: Sequence[LevelFeatures], out_dir: str) -> List[str]:
    by_level = {level.level: level for level in levels}
    written = []
    iterations = sorted({visit.iteration for visit in record.visits})
    for iteration in iterations:
        visits = record.for_iteration(iteration)
        points = []
        for visit in visits:
            level = by_level[visit.level]
            centers = level.cell_centers()[visit.mask.reshape(-1)]
            points.extend((float(x), float(y)) for x, y in centers)
            path = os.path.join(out_dir, f'csp_iter{iteration}_L{visit.level}.pgm')
            write_pgm(path, upscale(visit.mask.astype(np.float64), level.stride))
            written.append(path)
        overlay = os.path.join(out_dir, f'csp_iter{iteration}.ppm')
        write_ppm(overlay, draw_points(image, points, MASK_COLOR))
        write_json(_sidecar(overlay), {
            'iteration': iteration,
            'activated': {str(v.level): v.activated for v in visits},
            'masks': {str(v.level): v.mask.astype(int).tolist() for v in visits},
        })
        written.append(overlay)
    return written


def export_query_overlays(image: np.ndarray, result: ForwardResult, num_queries: int, out_dir: str) -> Dict[str, str]:
    """Selected query positions under classification-only and combined scoring."""
    tokens = result.scored.tokens()
    written = {}
    for by in (BY_CLASSIFICATION, BY_COMBINED):
        selected: List[QueryToken] = select_queries(tokens, num_queries, by)
        path = os.path.join(out_dir, f'queries_{by}.ppm')
        write_ppm(path, draw_points(image, [token.position for token in selected], QUERY_COLOR))
        write_json(_sidecar(path), {
            'selection': by,
            'queries': [{'index': t.index, 'position': list(t.position), 'level': t.level, 'cls_score': t.cls_score, 'center_score': t.center_score} for t in selected],
        })
        written[by] = path
    return written


def export_point_similarity(result: ForwardResult, point: Tuple[float, float], out_dir: str) -> List[str]:
    """Deepest-level map of the feature under ``point`` next to the map of the final embedding."""
    x, y = point
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise InvalidArgumentError(f'point must be normalized to [0, 1], got {point}')
    deepest = max(result.levels, key=lambda level: level.level)
    row = min(deepest.height - 1, int(y * deepest.height))
    col = min(deepest.width - 1, int(x * deepest.width))
    with nx.no_grad():
        feature = nx.take(deepest.tokens.detach(), [row * deepest.width + col])
    meta = {'level': deepest.level, 'point': [x, y], 'cell': [row, col]}
    point_path = write_heatmap(os.path.join(out_dir, f'point_L{deepest.level}.pgm'), similarity_heatmap(feature, deepest), deepest.stride, {**meta, 'state': 'point'})
    final_path = write_heatmap(os.path.join(out_dir, f'final_L{deepest.level}.pgm'), similarity_heatmap(result.embedding_final, deepest), deepest.stride, {**meta, 'state': 'final'})
    return [point_path, final_path]
