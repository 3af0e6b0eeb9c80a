from typing import Any, Callable, Optional

EventPredicate = Callable[..., bool]
EventListener = Callable[..., None]

STEP_END = 'step_end'
EPOCH_END = 'epoch_end'
CHECKPOINT_SAVED = 'checkpoint_saved'
EVENT_TYPES = (STEP_END, EPOCH_END, CHECKPOINT_SAVED)


def _make_every_predicate(every: int, counter_key: str) -> EventPredicate:
    if every < 1:
        raise ValueError(f'every must be >= 1, got {every}')

    def predicate(*args: Any, **kwargs: Any) -> bool:
        value = kwargs.get(counter_key)
        return value is not None and int(value) % every == 0
    return predicate


def on_event(event_type: str, every: Optional[int]=None, counter_key: str='step') -> Callable[[EventListener], EventListener]:
    """Mark a method as a listener; ``every`` restricts it to counters divisible by that value."""
    if event_type not in EVENT_TYPES:
        raise ValueError(f'unknown event type {event_type!r}; expected one of {EVENT_TYPES}')

    def decorator(func: EventListener) -> EventListener:
        if not hasattr(func, '_event_handlers'):
            func._event_handlers = []
        predicate = _make_every_predicate(every, counter_key) if every is not None else None
        func._event_handlers.append({'event_type': event_type, 'predicate': predicate})
        return func
    return decorator


__all__ = ['on_event', 'EventPredicate', 'EventListener', 'STEP_END', 'EPOCH_END', 'CHECKPOINT_SAVED', 'EVENT_TYPES']
