"""Measurement repository: ingest, time-series query, subscribe/notify.

The same class serves as the node-local cache (over a local flat-file
backend) and as the global repository; local and global consumers see one
API.  The repository monitors itself: malformed lines, backend failures and
dropped deliveries are all exported as ordinary metrics.
"""

from __future__ import annotations

import logging
import queue
import threading
import time as _time
from dataclasses import dataclass
from typing import Callable, Optional

from .backends import RepositoryBackend
from .sample import (DEFAULT_MAX_VALUE_LEN, LineError, MetricSample,
                     parse_line, pattern_matches, validate_sample)

log = logging.getLogger(__name__)


@dataclass
class Subscription:
    sub_id: int
    metric_pattern: str
    node_pattern: str
    deliver: Callable[[MetricSample], None]
    queue_max: int = 0  # 0 = direct synchronous delivery

    def matches(self, s: MetricSample) -> bool:
        return (pattern_matches(self.metric_pattern, s.metric)
                and pattern_matches(self.node_pattern, s.node))


class QueuedSubscriber:
    """Bounded queue + drain thread so a slow consumer cannot block ingest;
    on overflow the subscriber is cancelled (and the event counted)."""

    def __init__(self, deliver: Callable[[MetricSample], None], maxsize: int = 1000):
        self.q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._deliver = deliver
        self.overflowed = False
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def __call__(self, sample: MetricSample) -> None:
        try:
            self.q.put_nowait(sample)
        except queue.Full:
            self.overflowed = True
            raise

    def _run(self):
        while True:
            s = self.q.get()
            if s is None:
                return
            try:
                self._deliver(s)
            except Exception:
                log.debug("subscriber delivery failed", exc_info=True)
                return

    def stop(self):
        try:
            self.q.put_nowait(None)
        except queue.Full:
            pass


class MeasurementRepository:
    def __init__(self, backend: RepositoryBackend, ident: str = "repository",
                 clock: Callable[[], float] = _time.time,
                 max_value_len: int = DEFAULT_MAX_VALUE_LEN):
        self.backend = backend
        self.ident = ident
        self.clock = clock
        self.max_value_len = max_value_len
        self._subs: dict[int, Subscription] = {}
        self._next_sub = 1
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    # -- ingest -------------------------------------------------------------

    def ingest(self, sample: MetricSample) -> None:
        try:
            validate_sample(sample, self.max_value_len)
        except LineError:
            self._count("repo.ingest.malformed")
            return
        self._store(sample)
        self._fanout(sample)

    def ingest_line(self, line: str) -> None:
        try:
            sample = parse_line(line)
        except LineError:
            self._count("repo.ingest.malformed")
            return
        if len(sample.value) > self.max_value_len:
            self._count("repo.ingest.malformed")
            return
        self._store(sample)
        self._fanout(sample)

    def _store(self, sample: MetricSample) -> None:
        try:
            self.backend.store(sample)
        except Exception:
            log.exception("backend store failed")
            self._count("repo.backend.errors")

    def _fanout(self, sample: MetricSample) -> None:
        with self._lock:
            subs = list(self._subs.values())
        for sub in subs:
            if not sub.matches(sample):
                continue
            try:
                sub.deliver(sample)
            except Exception:
                self._count("repo.subscriber.dropped")
                self.unsubscribe(sub.sub_id)

    def _count(self, metric: str) -> None:
        with self._lock:
            self._counters[metric] = self._counters.get(metric, 0) + 1
            n = self._counters[metric]
        s = MetricSample(self.ident, metric, max(1, int(self.clock())), str(n))
        self._store(s)
        self._fanout(s)

    def counter(self, metric: str) -> int:
        with self._lock:
            return self._counters.get(metric, 0)

    # -- queries (same surface locally and globally) ------------------------

    def series(self, node: str, metric: str, t0: int, t1: int) -> list:
        return self.backend.series(node, metric, t0, t1)

    def latest(self, node: str, metric: str) -> Optional[MetricSample]:
        return self.backend.latest(node, metric)

    def subscribe(self, metric_pattern: str, node_pattern: str,
                  deliver: Callable[[MetricSample], None],
                  queue_max: int = 0) -> int:
        if not metric_pattern or not node_pattern:
            raise ValueError("subscription patterns must be nonempty")
        if queue_max:
            deliver = QueuedSubscriber(deliver, queue_max)
        with self._lock:
            sub_id = self._next_sub
            self._next_sub += 1
            self._subs[sub_id] = Subscription(sub_id, metric_pattern, node_pattern,
                                              deliver, queue_max)
        return sub_id

    def unsubscribe(self, sub_id: int) -> None:
        with self._lock:
            sub = self._subs.pop(sub_id, None)
        if sub is not None and isinstance(sub.deliver, QueuedSubscriber):
            sub.deliver.stop()

    def ack(self, node: str, metric: str, timestamp: int, operator: str) -> None:
        """Record an operator acknowledgement as an ordinary sample on
        ``ack.<metric>`` with value ``<operator> <timestamp-acked>``."""
        s = MetricSample(node, f"ack.{metric}", max(1, int(self.clock())),
                         f"{operator} {timestamp}")
        self.ingest(s)

    def keys(self) -> list:
        return self.backend.keys()
