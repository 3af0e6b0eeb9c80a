import logging
import os
import sys
from typing import Any, Optional, TextIO

from ..utils.helpers import write_json

logger = logging.getLogger(__name__)


class RunContext:
    """Output directory plus user-facing status messages for one CLI invocation."""

    def __init__(self, out_dir: str, stream: Optional[TextIO]=None):
        self.out_dir = os.path.abspath(out_dir)
        self.stream = stream or sys.stdout
        os.makedirs(self.out_dir, exist_ok=True)

    def path(self, *parts: str) -> str:
        return os.path.join(self.out_dir, *parts)

    def _emit(self, symbol: str, message: str, level: int) -> None:
        print(f'{symbol} {message}', file=self.stream)
        logger.log(level, message)

    def success(self, message: str) -> None:
        self._emit('✅', message, logging.INFO)

    def warning(self, message: str) -> None:
        self._emit('⚠️', message, logging.WARNING)

    def error(self, message: str) -> None:
        self._emit('❌', message, logging.ERROR)

    def info(self, message: str) -> None:
        self._emit('ℹ️', message, logging.INFO)

    def write_json(self, relative: str, obj: Any) -> str:
        path = write_json(self.path(relative), obj)
        logger.debug(f'Wrote {path}')
        return path
