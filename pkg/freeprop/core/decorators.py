import logging
import time
from functools import wraps
from typing import Callable, List, Optional, TypeVar

T = TypeVar('T')


def log_execution(log_level: int=logging.INFO, with_args: bool=False, sensitive_keys: Optional[List[str]]=None) -> Callable[[Callable[..., T]], Callable[..., T]]:
    """Log name, wall time and (optionally) arguments of every call to the function's module logger."""

    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        logger = logging.getLogger(func.__module__)

        @wraps(func)
        def wrapper(*args, **kwargs) -> T:
            log_data = {'call': func.__qualname__, 'execution_time': 0.0}
            if with_args:
                args_data = {f'arg_{i}': str(arg) for i, arg in enumerate(args)}
                for k, v in kwargs.items():
                    args_data[k] = '***' if sensitive_keys and k in sensitive_keys else str(v)
                log_data['args'] = args_data
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            except Exception as e:
                log_data['error'] = f'{type(e).__name__}: {e}'
                raise
            finally:
                log_data['execution_time'] = round(time.perf_counter() - start, 6)
                logger.log(log_level, log_data)
        return wrapper
    return decorator
