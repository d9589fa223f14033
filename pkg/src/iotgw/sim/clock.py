"""Clocks and the discrete-event scheduler behind virtual-clock runs.

Virtual time only moves inside EventScheduler.run_until(): the scheduler
pops the earliest callback, sets the clock, runs it, then calls the drain
hook so in-flight network traffic settles before time advances again.
Identical schedules therefore produce identical byte streams.
"""

from __future__ import annotations

import heapq
import itertools
import time
from typing import Callable, Optional


class SystemClock:
    """Wall-clock epoch seconds; used by real-clock runs."""

    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float):
        time.sleep(seconds)


class VirtualClock:
    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now


class EventScheduler:
    """Heap of (time, seq, callback); seq keeps equal-time order stable."""

    def __init__(self, clock: VirtualClock,
                 drain: Optional[Callable[[], None]] = None):
        self.clock = clock
        self.drain = drain
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = itertools.count()

    def call_at(self, when: float, fn: Callable[[], None]):
        if when < self.clock.now():
            raise ValueError(f"cannot schedule at {when}, now is {self.clock.now()}")
        heapq.heappush(self._heap, (when, next(self._seq), fn))

    def call_later(self, delay: float, fn: Callable[[], None]):
        self.call_at(self.clock.now() + delay, fn)

    @property
    def pending(self) -> int:
        return len(self._heap)

    def _settle(self):
        if self.drain is not None:
            self.drain()

    def run_until(self, deadline: float):
        """Run every callback scheduled at or before ``deadline``.

        The clock lands exactly on ``deadline`` when the queue runs dry
        early, so follow-up scheduling sees consistent time.
        """
        self._settle()
        while self._heap and self._heap[0][0] <= deadline:
            when, _, fn = heapq.heappop(self._heap)
            self.clock._now = when
            fn()
            self._settle()
        if self.clock.now() < deadline:
            self.clock._now = deadline

    def run_all(self):
        self._settle()
        while self._heap:
            when, _, fn = heapq.heappop(self._heap)
            self.clock._now = when
            fn()
            self._settle()
