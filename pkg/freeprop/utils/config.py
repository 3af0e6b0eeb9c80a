import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional, Sequence

from ..core.errors import ConfigError
from ..data.synthdata import SceneConfig
from ..modules.csp import CspConfig
from ..modules.matching_loss import LossConfig
from ..pipeline.evaluation import EvalConfig
from ..pipeline.model import ModelConfig
from ..pipeline.training import TrainConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str = 'data'
    eval_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    out_dir: str = 'runs'

    def validate(self, section: str='paths') -> None:
        if not self.data_dir:
            raise ConfigError(f'{section}.data_dir', 'dataset directory must not be empty')
        if not self.out_dir:
            raise ConfigError(f'{section}.out_dir', 'output directory must not be empty')


@dataclass(frozen=True)
class LoggingConfig:
    level: str = 'INFO'
    file: Optional[str] = None

    def validate(self, section: str='logging') -> None:
        if str(self.level).upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ConfigError(f'{section}.level', f'unknown log level {self.level!r}')


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    csp: CspConfig = field(default_factory=CspConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    def validate(self) -> None:
        for f in fields(self):
            getattr(self, f.name).validate(f.name)
        if self.model.num_queries < self.scene.objects_max:
            raise ConfigError('model.num_queries', f'query budget N ({self.model.num_queries}) must be >= the maximum object count ({self.scene.objects_max})')
        if self.model.canvas != self.scene.canvas:
            raise ConfigError('model.canvas', f'model canvas {self.model.canvas} differs from scene canvas {self.scene.canvas}')

    def with_changes(self, section: str, **changes: Any) -> 'RunConfig':
        return replace(self, **{section: replace(getattr(self, section), **changes)})

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return _jsonable(asdict(self))


SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class ConfigManager:
    """JSON run configuration: one object per section, unknown keys rejected."""

    def __init__(self, config_file: Optional[str]=None, overrides: Sequence[str]=()):
        self.config_file = os.path.abspath(config_file) if config_file else None
        self.config: Dict[str, Dict[str, Any]] = {section: {} for section in SECTIONS}
        if self.config_file is not None:
            self._load_config()
        for override in overrides:
            self.apply_override(override)

    def _load_config(self) -> None:
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                document = json.load(f)
        except OSError as e:
            raise ConfigError('config', f'cannot read config file {self.config_file}: {e}') from e
        except json.JSONDecodeError as e:
            raise ConfigError('config', f'malformed JSON in {self.config_file}: {e}') from e
        if not isinstance(document, dict):
            raise ConfigError('config', 'top level of the config file must be an object of sections')
        for section, keys in document.items():
            if not isinstance(keys, dict):
                raise ConfigError(str(section), 'section must be an object')
            for key, value in keys.items():
                self.set(section, key, value)
        logger.info(f'Loaded config file: {self.config_file}')

    def _check_key(self, section: str, key: str) -> None:
        if section not in SECTIONS:
            raise ConfigError(f'{section}.{key}', f'unknown section {section!r}')
        known = {f.name for f in fields(SECTIONS[section]())}
        if key not in known:
            raise ConfigError(f'{section}.{key}', f'unknown key {key!r} in section {section!r}')

    def get(self, section: str, key: str, fallback: Optional[Any]=None) -> Any:
        self._check_key(section, key)
        if key in self.config[section]:
            return self.config[section][key]
        default = getattr(SECTIONS[section](), key)
        return default if default is not None else fallback

    def set(self, section: str, key: str, value: Any) -> None:
        self._check_key(section, key)
        if isinstance(value, str):
            value = self._auto_convert_value(value)
        self.config[section][key] = value
        logger.debug(f'Config [{section}] {key} = {value!r}')

    def apply_override(self, override: str) -> None:
        """Apply a ``section.key=value`` flag."""
        target, sep, raw = override.partition('=')
        section, dot, key = target.strip().partition('.')
        if not sep or not dot or not section or not key:
            raise ConfigError(target.strip() or override, 'override must look like section.key=value')
        self.set(section, key, raw)

    def _auto_convert_value(self, value: Optional[str]) -> Any:
        if value is None:
            return None
        stripped_value = value.strip()
        if not stripped_value or stripped_value.lower() in ('null', 'none'):
            return None
        if stripped_value.startswith('[') and stripped_value.endswith(']') or (stripped_value.startswith('{') and stripped_value.endswith('}')):
            try:
                return json.loads(stripped_value)
            except json.JSONDecodeError:
                logger.debug(f"Failed to parse '{stripped_value}' as JSON, treating as string.")
        lower_val = stripped_value.lower()
        if lower_val in ('true', 'yes', 'on'):
            return True
        if lower_val in ('false', 'no', 'off'):
            return False
        try:
            return int(stripped_value)
        except ValueError:
            try:
                return float(stripped_value)
            except ValueError:
                return stripped_value

    def _coerce(self, section: str, key: str, value: Any, default: Any) -> Any:
        name = f'{section}.{key}'
        words = key.replace('_', ' ')
        if value is None:
            if default is None:
                return None
            raise ConfigError(name, f'{words} must not be null')
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(name, f'{words} must be true or false, got {value!r}')
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
                raise ConfigError(name, f'{words} must be an integer, got {value!r}')
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(name, f'{words} must be a number, got {value!r}')
            return float(value)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(name, f'{words} must be a list, got {value!r}')
            element = default[0] if default else None
            return tuple(self._coerce(section, key, v, element) for v in value)
        if not isinstance(value, str):
            raise ConfigError(name, f'{words} must be a string, got {value!r}')
        return value

    def resolve(self) -> RunConfig:
        sections = {}
        for section, factory in SECTIONS.items():
            defaults = factory()
            values = {key: self._coerce(section, key, value, getattr(defaults, key)) for key, value in self.config[section].items()}
            sections[section] = replace(defaults, **values)
        run = RunConfig(**sections)
        run.validate()
        return run

    def __str__(self) -> str:
        return json.dumps(self.config, indent=2, sort_keys=True)
