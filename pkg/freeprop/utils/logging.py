import logging
import os
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .config import LoggingConfig

ROOT_LOGGER = 'freeprop'


def setup_logger(name: str=ROOT_LOGGER, config: Optional['LoggingConfig']=None) -> logging.Logger:
    logger = logging.getLogger(name)
    level_name = config.level if config is not None else 'INFO'
    log_level = getattr(logging, str(level_name).upper(), logging.INFO)
    logger.setLevel(log_level)
    formatter = logging.Formatter('[%(asctime)s] %(levelname)s [%(name)s.%(funcName)s:%(lineno)d]: %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    if logger.hasHandlers():
        for handler in logger.handlers[:]:
            logger.removeHandler(handler)
            handler.close()
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)
    log_file_path = None
    if config is not None and config.file:
        log_file_path = os.path.abspath(config.file)
        os.makedirs(os.path.dirname(log_file_path), exist_ok=True)
        file_handler = logging.FileHandler(filename=log_file_path, encoding='utf-8', mode='a')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    logger.debug(f"Logger '{name}' initialized with level {logging.getLevelName(log_level)} and output to {log_file_path or 'console'}")
    return logger
