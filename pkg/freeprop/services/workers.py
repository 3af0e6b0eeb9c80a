import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)
T = TypeVar('T')
R = TypeVar('R')


def map_ordered(fn: Callable[[T], R], items: Iterable[T], *, workers: Optional[int]=None, name: Optional[str]=None) -> List[R]:
    """Apply fn to every item, possibly on a thread pool; results keep input order."""
    items = list(items)
    if not items:
        return []
    if not workers or workers <= 1 or len(items) == 1:
        return [fn(item) for item in items]
    name = name or f'pool_{getattr(fn, "__name__", "task")}'
    logger.debug(f"Task '{name}': {len(items)} items on {workers} workers")
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix=name) as pool:
        try:
            return list(pool.map(fn, items))
        except Exception as e:
            logger.error(f"Task '{name}' failed: {e}", exc_info=True)
            raise
