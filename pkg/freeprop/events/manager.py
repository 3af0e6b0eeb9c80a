import inspect
import logging
from typing import Any, Dict, List, Optional, Tuple

from .decorators import EVENT_TYPES, EventListener, EventPredicate

logger = logging.getLogger(__name__)


class EventManager:

    def __init__(self):
        self._listeners: Dict[str, List[Tuple[Optional[EventPredicate], EventListener, str]]] = {event_type: [] for event_type in EVENT_TYPES}

    def add_listener(self, event_type: str, predicate: Optional[EventPredicate], listener: EventListener, func_name: Optional[str]=None) -> None:
        func_name = func_name or getattr(listener, '__qualname__', repr(listener))
        self._listeners.setdefault(event_type, []).append((predicate, listener, func_name))
        logger.debug(f"Event listener added for '{event_type}': {func_name}")

    def get_listeners(self, event_type: str) -> List[Tuple[Optional[EventPredicate], EventListener, str]]:
        return self._listeners.get(event_type, [])

    def register_object(self, obj: Any) -> int:
        """Register every method of ``obj`` marked with ``on_event``; returns how many were added."""
        added = 0
        for member_name, member in inspect.getmembers(obj, predicate=inspect.ismethod):
            for handler_info in getattr(member, '_event_handlers', []):
                self.add_listener(handler_info['event_type'], handler_info['predicate'], member, f'{type(obj).__name__}.{member_name}')
                added += 1
        return added

    def dispatch(self, event_type: str, **payload: Any) -> None:
        logger.debug(f"Dispatching event '{event_type}' with keys: {sorted(payload)}")
        for predicate, listener, func_name in self.get_listeners(event_type):
            if predicate is None or predicate(**payload):
                self._safe_execute_listener(listener, func_name, event_type, payload)

    def _safe_execute_listener(self, listener: EventListener, func_name: str, event_type: str, payload: Dict[str, Any]) -> None:
        try:
            listener(**payload)
        except Exception as e:
            logger.error(f"Error in event listener '{func_name}' for event '{event_type}': {e}", exc_info=True)
