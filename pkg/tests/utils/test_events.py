import logging

import pytest

from freeprop.events.decorators import CHECKPOINT_SAVED, EPOCH_END, STEP_END, on_event
from freeprop.events.manager import EventManager


class Listener:

    def __init__(self):
        self.seen = []

    @on_event(STEP_END, every=3)
    def every_third(self, step, **payload):
        self.seen.append(('third', step))

    @on_event(EPOCH_END)
    @on_event(CHECKPOINT_SAVED, counter_key='epoch')
    def epoch_or_checkpoint(self, epoch, **payload):
        self.seen.append(('epoch', epoch))

    def not_a_listener(self):
        pass


class TestEventManager:

    def test_register_object_counts_handlers(self):
        assert EventManager().register_object(Listener()) == 3

    def test_every_filters_by_counter(self):
        events = EventManager()
        listener = Listener()
        events.register_object(listener)
        for step in range(1, 8):
            events.dispatch(STEP_END, step=step, epoch=1)
        assert listener.seen == [('third', 3), ('third', 6)]

    def test_stacked_decorators(self):
        events = EventManager()
        listener = Listener()
        events.register_object(listener)
        events.dispatch(EPOCH_END, step=4, epoch=2)
        events.dispatch(CHECKPOINT_SAVED, step=4, epoch=2, path='x')
        assert listener.seen == [('epoch', 2), ('epoch', 2)]

    def test_plain_function_listener(self):
        events = EventManager()
        calls = []
        events.add_listener(EPOCH_END, None, lambda **payload: calls.append(payload['epoch']))
        events.dispatch(EPOCH_END, epoch=5)
        assert calls == [5]
        assert len(events.get_listeners(EPOCH_END)) == 1
        assert events.get_listeners('unknown') == []

    def test_failing_listener_is_logged(self, caplog):
        events = EventManager()
        calls = []

        def broken(**payload):
            raise RuntimeError('boom')
        events.add_listener(STEP_END, None, broken, 'broken')
        events.add_listener(STEP_END, None, lambda **payload: calls.append(payload['step']))
        with caplog.at_level(logging.ERROR, logger='freeprop.events.manager'):
            events.dispatch(STEP_END, step=1)
        assert calls == [1]
        assert "Error in event listener 'broken'" in caplog.text


class TestOnEvent:

    def test_unknown_event(self):
        with pytest.raises(ValueError):
            on_event('batch_start')

    def test_every_must_be_positive(self):
        with pytest.raises(ValueError):
            on_event(STEP_END, every=0)(lambda self: None)
