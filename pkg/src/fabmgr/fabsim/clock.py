"""Deterministic virtual clock and event scheduler.

Events run in (time, sequence) order, so a fixed seed and fixed wiring give
byte-identical scenario logs across runs.  ``run_paced`` pumps the same
queue against the wall clock for live (console-facing) fabrics.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time as _time
from typing import Callable


class Cancelled:
    __slots__ = ("flag",)

    def __init__(self):
        self.flag = False

    def cancel(self):
        self.flag = True


class VirtualClock:
    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._heap: list = []
        self._seq = itertools.count()
        self._lock = threading.RLock()

    def now(self) -> float:
        return self._now

    __call__ = now

    def schedule(self, delay: float, fn: Callable[[], None]) -> Cancelled:
        return self.schedule_at(self._now + max(0.0, delay), fn)

    def schedule_at(self, t: float, fn: Callable[[], None]) -> Cancelled:
        handle = Cancelled()
        with self._lock:
            heapq.heappush(self._heap, (t, next(self._seq), fn, handle))
        return handle

    def every(self, period: float, fn: Callable[[], None], phase: float = 0.0) -> Cancelled:
        """Recurring event; the returned handle cancels future occurrences."""
        if period <= 0:
            raise ValueError("period must be positive")
        handle = Cancelled()

        def tick():
            if handle.flag:
                return
            fn()
            if not handle.flag:
                with self._lock:
                    heapq.heappush(self._heap, (self._now + period, next(self._seq),
                                                tick, handle))
        with self._lock:
            heapq.heappush(self._heap, (self._now + max(0.0, phase), next(self._seq),
                                        tick, handle))
        return handle

    def _pop_due(self, limit: float):
        with self._lock:
            if self._heap and self._heap[0][0] <= limit:
                return heapq.heappop(self._heap)
        return None

    def run_until(self, t: float) -> int:
        """Advance virtual time to ``t``, running every due event in order."""
        ran = 0
        while True:
            item = self._pop_due(t)
            if item is None:
                break
            when, _, fn, handle = item
            self._now = max(self._now, when)
            if not handle.flag:
                fn()
                ran += 1
        self._now = max(self._now, t)
        return ran

    def run_for(self, dt: float) -> int:
        return self.run_until(self._now + dt)

    def run_paced(self, stop: threading.Event, speed: float = 1.0) -> None:
        """Run events as the wall clock reaches them (virtual = start +
        elapsed * speed); used by live fabrics serving the console."""
        anchor_wall = _time.monotonic()
        anchor_virtual = self._now
        while not stop.is_set():
            target = anchor_virtual + (_time.monotonic() - anchor_wall) * speed
            self.run_until(target)
            with self._lock:
                head = self._heap[0][0] if self._heap else None
            if head is None:
                wait = 0.05
            else:
                wait = min(0.05, max(0.0, (head - self._now) / speed))
            stop.wait(wait if wait > 0 else 0.001)
