"""Monitoring Sensor Agent: drives sensors on their configured periods and
feeds every sample (polled or unsolicited) into the local cache and the
transport."""

from __future__ import annotations

import heapq
import logging
import threading
import time as _time
from typing import Callable, Optional

from .repository import MeasurementRepository
from .sample import MetricConfig, MetricSample
from .sensors import (InlineSensorLink, SensorDead, SensorError, SensorLink,
                      SensorRegistry, start_sensor_host)

log = logging.getLogger(__name__)


class Msa:
    def __init__(self, node: str, configs: list, cache: MeasurementRepository,
                 transport, registry: SensorRegistry,
                 clock: Callable[[], float] = _time.time,
                 attach: str = "protocol"):
        if attach not in ("protocol", "inline"):
            raise ValueError(f"unknown sensor attach mode {attach!r}")
        self.node = node
        self.configs = list(configs)
        self.cache = cache
        self.transport = transport
        self.registry = registry
        self.clock = clock
        self.attach = attach
        self._links: dict[str, object] = {}
        self._lock = threading.Lock()
        if transport is not None and getattr(transport, "on_drop", False) is None:
            transport.on_drop = self._transport_drop
        for cfg in self.configs:
            self._link(cfg.sensor)
            try:
                self._links[cfg.sensor].configure(cfg.metric, cfg.params)
            except (SensorDead, SensorError):
                self._sensor_down(cfg.sensor)

    def _link(self, sensor_name: str):
        with self._lock:
            link = self._links.get(sensor_name)
            if link is not None:
                return link
            sensor = self.registry.create(sensor_name)
            sensor.clock = self.clock
            if self.attach == "inline":
                link = InlineSensorLink(sensor, sensor_name, self._on_unsolicited)
            else:
                conn = start_sensor_host(sensor)
                link = SensorLink(conn, sensor_name, self._on_unsolicited)
            self._links[sensor_name] = link
            return link

    def _on_unsolicited(self, metric: str, ts: int, value: str) -> None:
        self.record(MetricSample(self.node, metric, ts, value))

    def record(self, sample: MetricSample) -> None:
        self.cache.ingest(sample)
        if self.transport is not None:
            self.transport.send(sample)

    def _sensor_down(self, sensor_name: str) -> None:
        ts = max(1, int(self.clock()))
        self.record(MetricSample(self.node, f"msa.sensor.{sensor_name}.alive", ts, "0"))

    def _transport_drop(self, count: int) -> None:
        # cache only: feeding the counter back into an overflowing transport
        # would amplify the overflow
        ts = max(1, int(self.clock()))
        self.cache.ingest(MetricSample(self.node, "msa.transport.dropped", ts, str(count)))

    def poll_metric(self, cfg: MetricConfig, timestamp: Optional[int] = None) -> Optional[MetricSample]:
        """Sample one metric now; on sensor failure records the
        self-monitoring sample instead and returns None."""
        link = self._links.get(cfg.sensor)
        if link is None or getattr(link, "dead", False):
            self._links.pop(cfg.sensor, None)
            self._sensor_down(cfg.sensor)
            return None
        try:
            metric, ts, value = link.get(cfg.metric)
        except (SensorDead, SensorError):
            self._sensor_down(cfg.sensor)
            return None
        except Exception:
            log.debug("sensor %s failed", cfg.sensor, exc_info=True)
            self._sensor_down(cfg.sensor)
            return None
        if timestamp is not None:
            ts = timestamp
        sample = MetricSample(self.node, metric, ts, value)
        self.record(sample)
        return sample

    def close(self) -> None:
        for link in list(self._links.values()):
            link.quit()
        self._links.clear()


class MsaRunner:
    """Wall-clock scheduler: per-metric timers on one thread."""

    def __init__(self, msa: Msa):
        self.msa = msa
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self) -> None:
        now = self.msa.clock()
        heap = [(now + cfg.period, i, cfg) for i, cfg in enumerate(self.msa.configs)
                if cfg.period > 0]
        heapq.heapify(heap)
        while heap and not self._stop.is_set():
            due, i, cfg = heapq.heappop(heap)
            delay = due - self.msa.clock()
            if delay > 0 and self._stop.wait(delay):
                return
            self.msa.poll_metric(cfg)
            heapq.heappush(heap, (due + cfg.period, i, cfg))

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
