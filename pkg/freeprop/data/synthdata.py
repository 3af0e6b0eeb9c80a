"""Deterministic synthetic scenes: flat-colored shapes on a noisy background."""
import json
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.enums import ShapeKind
from ..core.errors import ConfigError, DatasetError
from ..core.geometry import Annotation, BoxXYXY, iou
from ..services.workers import map_ordered
from ..utils.helpers import canonical_json, rng_for, sha256_hex
from ..utils.imageio import read_ppm, write_ppm

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.json'
SCENES_DIR = 'scenes'
BOX_DECIMALS = 6
MIN_COLOR_CONTRAST = 0.3
MAX_PLACEMENT_ATTEMPTS = 200


@dataclass(frozen=True)
class SceneConfig:
    canvas: int = 128
    objects_min: int = 1
    objects_max: int = 6
    shapes: Tuple[str, ...] = ('rectangle', 'ellipse', 'triangle')
    size_min: float = 0.06
    size_max: float = 0.45
    noise: float = 0.05
    max_overlap: float = 0.7
    seed: int = 0
    count: int = 500
    first_index: int = 0

    def validate(self, section: str='scene') -> None:
        if self.canvas < 8:
            raise ConfigError(f'{section}.canvas', 'canvas must be at least 8 pixels')
        if self.objects_min < 1:
            raise ConfigError(f'{section}.objects_min', 'minimum object count must be >= 1')
        if self.objects_max < self.objects_min:
            raise ConfigError(f'{section}.objects_max', 'maximum object count must be >= the minimum')
        if not 0.0 < self.size_min <= self.size_max < 1.0:
            raise ConfigError(f'{section}.size_min', 'size range must satisfy 0 < size_min <= size_max < 1')
        if not self.shapes:
            raise ConfigError(f'{section}.shapes', 'at least one shape kind is required')
        for kind in self.shapes:
            try:
                ShapeKind(kind)
            except ValueError:
                raise ConfigError(f'{section}.shapes', f'unknown shape kind {kind!r}')
        if self.noise < 0.0:
            raise ConfigError(f'{section}.noise', 'noise amplitude must be non-negative')
        if not 0.0 < self.max_overlap <= 1.0:
            raise ConfigError(f'{section}.max_overlap', 'overlap limit must lie in (0, 1]')
        if self.count < 0 or self.first_index < 0:
            raise ConfigError(f'{section}.count', 'scene count and first index must be non-negative')


@dataclass
class RenderedObject:
    kind: ShapeKind
    color: np.ndarray
    mask: np.ndarray
    box: BoxXYXY


@dataclass
class Scene:
    id: str
    image: np.ndarray
    annotation: Annotation


def scene_id(index: int) -> str:
    return f'{index:06d}'


def _pixel_centers(canvas: int) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:canvas, 0:canvas]
    return xs + 0.5, ys + 0.5


def _shape_mask(kind: ShapeKind, x0: float, y0: float, w: float, h: float, apex: float, canvas: int) -> np.ndarray:
    px, py = _pixel_centers(canvas)
    if kind is ShapeKind.RECTANGLE:
        return (px >= x0) & (px <= x0 + w) & (py >= y0) & (py <= y0 + h)
    if kind is ShapeKind.ELLIPSE:
        cx, cy = x0 + w / 2.0, y0 + h / 2.0
        return ((px - cx) / (w / 2.0)) ** 2 + ((py - cy) / (h / 2.0)) ** 2 <= 1.0
    vertices = [(x0, y0 + h), (x0 + w, y0 + h), (x0 + apex * w, y0)]
    signs = []
    for (ax, ay), (bx, by) in zip(vertices, vertices[1:] + vertices[:1]):
        signs.append((bx - ax) * (py - ay) - (by - ay) * (px - ax))
    return np.all([s >= 0 for s in signs], axis=0) | np.all([s <= 0 for s in signs], axis=0)


def tight_box(mask: np.ndarray) -> BoxXYXY:
    canvas = mask.shape[0]
    ys, xs = np.nonzero(mask)
    coords = (xs.min() / canvas, ys.min() / canvas, (xs.max() + 1) / canvas, (ys.max() + 1) / canvas)
    return BoxXYXY(*(round(float(c), BOX_DECIMALS) for c in coords))


def _distinct_color(rng: np.random.Generator, background: np.ndarray) -> np.ndarray:
    while True:
        color = rng.uniform(0.0, 1.0, size=3)
        if np.max(np.abs(color - background)) >= MIN_COLOR_CONTRAST:
            return color


def render_objects(config: SceneConfig, index: int) -> Tuple[np.ndarray, List[RenderedObject]]:
    """Background and objects of one scene, in drawing order (back to front)."""
    rng = rng_for(config.seed, index)
    canvas = config.canvas
    background = rng.uniform(0.2, 0.8, size=3)
    base = background + config.noise * rng.uniform(-1.0, 1.0, size=(canvas, canvas, 3))
    wanted = int(rng.integers(config.objects_min, config.objects_max + 1))
    kinds = [ShapeKind(k) for k in config.shapes]
    objects: List[RenderedObject] = []
    attempts = 0
    while len(objects) < wanted and attempts < MAX_PLACEMENT_ATTEMPTS:
        attempts += 1
        kind = kinds[int(rng.integers(len(kinds)))]
        w = rng.uniform(config.size_min, config.size_max) * canvas
        h = rng.uniform(config.size_min, config.size_max) * canvas
        x0 = rng.uniform(0.0, canvas - w)
        y0 = rng.uniform(0.0, canvas - h)
        apex = rng.uniform(0.0, 1.0)
        color = _distinct_color(rng, background)
        mask = _shape_mask(kind, x0, y0, w, h, apex, canvas)
        if not mask.any():
            continue
        box = tight_box(mask)
        if any(iou(box, other.box) > config.max_overlap for other in objects):
            continue
        objects.append(RenderedObject(kind, color, mask, box))
    if len(objects) < config.objects_min:
        raise DatasetError(scene_id(index), f'placed {len(objects)} of at least {config.objects_min} objects after {attempts} attempts; loosen size or overlap limits')
    return base, objects


def generate_scene(config: SceneConfig, index: int) -> Tuple[np.ndarray, Annotation]:
    base, objects = render_objects(config, index)
    image = base.copy()
    for obj in objects:
        image[obj.mask] = obj.color
    image = np.rint(np.clip(image, 0.0, 1.0) * 255.0) / 255.0
    return image, Annotation([obj.box for obj in objects])


def generate_dataset(config: SceneConfig, count: Optional[int]=None, first_index: Optional[int]=None, workers: Optional[int]=None) -> List[Scene]:
    count = config.count if count is None else count
    first_index = config.first_index if first_index is None else first_index

    def build(index: int) -> Scene:
        image, annotation = generate_scene(config, index)
        return Scene(scene_id(index), image, annotation)
    return map_ordered(build, range(first_index, first_index + count), workers=workers, name='generate_scene')


def _annotation_payload(scene: Scene) -> bytes:
    document = {'id': scene.id, 'canvas': int(scene.image.shape[0]), 'boxes': [[round(v, BOX_DECIMALS) for v in row] for row in scene.annotation.to_list()]}
    return canonical_json(document).encode('utf-8')


def write_dataset(scenes: Sequence[Scene], directory: str, workers: Optional[int]=None) -> str:
    directory = os.path.abspath(directory)
    os.makedirs(os.path.join(directory, SCENES_DIR), exist_ok=True)

    def write_one(scene: Scene) -> dict:
        image_rel = f'{SCENES_DIR}/{scene.id}.ppm'
        annotation_rel = f'{SCENES_DIR}/{scene.id}.json'
        payload = _annotation_payload(scene)
        write_ppm(os.path.join(directory, image_rel), scene.image)
        with open(os.path.join(directory, annotation_rel), 'wb') as f:
            f.write(payload)
        return {'id': scene.id, 'image': image_rel, 'annotation': annotation_rel, 'digest': sha256_hex(payload)}
    entries = map_ordered(write_one, scenes, workers=workers, name='write_scene')
    with open(os.path.join(directory, MANIFEST), 'w', encoding='utf-8') as f:
        f.write(canonical_json(entries))
    logger.info(f'Wrote {len(entries)} scenes to {directory}')
    return directory


def _load_entry(directory: str, entry: dict) -> Scene:
    sid = str(entry.get('id')) if isinstance(entry, dict) else None
    try:
        with open(os.path.join(directory, entry['annotation']), 'rb') as f:
            payload = f.read()
        if sha256_hex(payload) != entry['digest']:
            raise DatasetError(sid, 'annotation digest does not match manifest')
        document = json.loads(payload.decode('utf-8'))
        annotation = Annotation.from_list(document['boxes'])
        image = read_ppm(os.path.join(directory, entry['image']))
    except DatasetError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise DatasetError(sid, f'cannot load scene: {e}') from e
    return Scene(sid, image, annotation)


def _read_manifest(directory: str) -> List[dict]:
    if not os.path.isdir(directory):
        raise DatasetError(None, f'dataset directory not found: {directory}')
    manifest_path = os.path.join(directory, MANIFEST)
    if not os.path.exists(manifest_path):
        if os.listdir(directory):
            logger.warning(f'No manifest in non-empty directory {directory}; treating as empty dataset')
        return []
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            entries = json.load(f)
    except (OSError, ValueError) as e:
        raise DatasetError(None, f'corrupt manifest {manifest_path}: {e}') from e
    if not isinstance(entries, list):
        raise DatasetError(None, f'corrupt manifest {manifest_path}: expected a list')
    return entries


def read_dataset(directory: str, workers: Optional[int]=None) -> List[Scene]:
    directory = os.path.abspath(directory)
    entries = _read_manifest(directory)
    return map_ordered(lambda entry: _load_entry(directory, entry), entries, workers=workers, name='read_scene')


def read_scene(directory: str, sid: str) -> Optional[Scene]:
    """Load one scene by id, reading only its own files; None when the manifest lacks it."""
    directory = os.path.abspath(directory)
    for entry in _read_manifest(directory):
        if isinstance(entry, dict) and str(entry.get('id')) == sid:
            return _load_entry(directory, entry)
    return None
