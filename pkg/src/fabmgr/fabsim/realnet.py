"""Real-socket monitoring fabric: many agent nodes streaming over TCP
through fan-in proxies into one repository, used for the transport-scale and
proxy checks.

Sampling time is virtual (each node pushes its whole sampling window as fast
as the sockets take it) while every byte crosses real loopback TCP, so a
60-second sampling window completes in well under 60 wall seconds and
losslessness is still a real-network claim.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

from ..monitoring import (InMemoryBackend, MeasurementRepository, MetricSample,
                          TcpIngestServer, TcpProxy, TcpTransport)

T_BASE = 1_060_000_000


@dataclass
class MonitoringRunStats:
    nodes: int
    proxies: int
    metrics_per_node: int
    ticks: int
    sent: int = 0
    ingested: int = 0
    connections: int = 0
    wall_seconds: float = 0.0
    order_inversions: int = 0
    missing: int = 0


class MonitoringFabric:
    """``nodes`` total agents; the first ``proxies`` of them also relay for
    the others (Figure-3 style fan-in, statically assigned round-robin)."""

    def __init__(self, nodes: int, proxies: int, metrics_per_node: int, ticks: int):
        if proxies < 0 or proxies > nodes:
            raise ValueError("proxies must be between 0 and nodes")
        self.n_nodes = nodes
        self.n_proxies = proxies
        self.metrics_per_node = metrics_per_node
        self.ticks = ticks
        self.repo = MeasurementRepository(InMemoryBackend())
        self.server = TcpIngestServer(self.repo)
        self.proxies: list[TcpProxy] = []
        self.transports: list[TcpTransport] = []
        self.node_transport: dict[str, TcpTransport] = {}

        if proxies:
            for _ in range(proxies):
                upstream = TcpTransport(self.server.address)
                self.transports.append(upstream)
                self.proxies.append(TcpProxy(upstream))
        for i in range(nodes):
            name = f"node{i:03d}"
            if proxies:
                if i < proxies:
                    # a proxy node's own samples share its upstream connection
                    self.node_transport[name] = self.transports[i]
                else:
                    proxy = self.proxies[i % proxies]
                    leaf = TcpTransport(proxy.address)
                    self.transports.append(leaf)
                    self.node_transport[name] = leaf
            else:
                direct = TcpTransport(self.server.address)
                self.transports.append(direct)
                self.node_transport[name] = direct

    def run(self, threads: int = 16) -> MonitoringRunStats:
        stats = MonitoringRunStats(self.n_nodes, self.n_proxies,
                                   self.metrics_per_node, self.ticks)
        started = time.monotonic()
        names = sorted(self.node_transport)
        lock = threading.Lock()

        def pump(chunk):
            sent = 0
            for name in chunk:
                transport = self.node_transport[name]
                for tick in range(self.ticks):
                    ts = T_BASE + tick
                    for m in range(self.metrics_per_node):
                        transport.send(MetricSample(name, f"metric.{m:03d}", ts, str(tick)))
                        sent += 1
            with lock:
                stats.sent += sent

        workers = []
        size = max(1, len(names) // threads + (len(names) % threads > 0))
        for i in range(0, len(names), size):
            t = threading.Thread(target=pump, args=(names[i:i + size],), daemon=True)
            t.start()
            workers.append(t)
        for t in workers:
            t.join()
        for transport in self.transports:
            transport.flush(120)

        expected = self.n_nodes * self.metrics_per_node * self.ticks
        deadline = time.monotonic() + 120
        while time.monotonic() < deadline:
            if self._ingested_total() >= expected:
                break
            time.sleep(0.05)
        stats.ingested = self._ingested_total()
        stats.connections = self.server.connections_accepted
        stats.wall_seconds = time.monotonic() - started
        stats.order_inversions, stats.missing = self._check_order()
        return stats

    def _ingested_total(self) -> int:
        total = 0
        for i in range(self.n_nodes):
            name = f"node{i:03d}"
            for m in range(self.metrics_per_node):
                total += len(self.repo.series(name, f"metric.{m:03d}", 0, 2 ** 62))
        return total

    def _check_order(self) -> tuple:
        """Per-(origin, metric) tick sequences must arrive complete and
        without inversions."""
        inversions = 0
        missing = 0
        for i in range(self.n_nodes):
            name = f"node{i:03d}"
            for m in range(self.metrics_per_node):
                rows = self.repo.series(name, f"metric.{m:03d}", 0, 2 ** 62)
                values = [int(s.value) for s in rows]
                inversions += sum(1 for a, b in zip(values, values[1:]) if a > b)
                missing += self.ticks - len(values)
        return inversions, missing

    def close(self) -> None:
        for transport in self.transports:
            transport.close()
        for proxy in self.proxies:
            proxy.close()
        self.server.close()


def run_monitoring_fabric(nodes: int, proxies: int, metrics_per_node: int,
                          ticks: int) -> MonitoringRunStats:
    fabric = MonitoringFabric(nodes, proxies, metrics_per_node, ticks)
    try:
        return fabric.run()
    finally:
        fabric.close()
