"""Sensor protocol, MSA agent, transports, proxy fan-in and the HTTP API."""

import json
import socket
import threading
import time

import pytest

from fabmgr.httpkit import HttpError, http_get, http_post_json
from fabmgr.monitoring import (CallableSensor, InMemoryBackend,
                               MeasurementRepository, MetricConfig,
                               MetricSample, Msa, MsaRunner,
                               RepositoryHttpServer, Sensor, SensorDead,
                               SensorLink, SensorRegistry, TcpIngestServer,
                               TcpProxy, TcpTransport, UdpIngestServer,
                               UdpTransport, format_line, start_sensor_host)

T0 = 1060000000


def wait_for(cond, timeout=10.0, interval=0.01):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if cond():
            return True
        time.sleep(interval)
    return cond()


# ---------------------------------------------------------------------------
# Sensor protocol


class FixedSensor(Sensor):
    def __init__(self, values):
        super().__init__(clock=lambda: T0)
        self.values = values

    def sample(self, metric):
        if metric not in self.values:
            raise Exception(f"unknown metric {metric}")
        return self.values[metric]


def test_sensor_get_sample_shape():
    conn = start_sensor_host(FixedSensor({"cpu.load": "0.42"}))
    # speak the raw protocol to pin the grammar
    conn.sendall(b"VERSION 1\n")
    f = conn.makefile("rb")
    assert f.readline() == b"OK -\n"
    conn.sendall(b"GET 7 cpu.load\n")
    assert f.readline() == f"SAMPLE 7 cpu.load {T0} 0.42\n".encode()
    conn.sendall(b"QUIT\n")
    assert f.readline() == b""


def test_sensor_error_response():
    conn = start_sensor_host(FixedSensor({}))
    conn.sendall(b"VERSION 1\nGET 3 nope\n")
    f = conn.makefile("rb")
    assert f.readline() == b"OK -\n"
    line = f.readline()
    assert line.startswith(b"ERROR 3 ")


def test_sensor_malformed_line_drops_connection():
    conn = start_sensor_host(FixedSensor({"m": "1"}))
    conn.sendall(b"VERSION 1\nSAMPLE\n")
    f = conn.makefile("rb")
    assert f.readline() == b"OK -\n"
    assert f.readline() == b""  # closed


def test_sensor_link_roundtrip_and_unsolicited():
    sensor = FixedSensor({"cpu.load": "0.42"})
    unsolicited = []
    link = SensorLink(start_sensor_host(sensor), "fixed",
                      on_unsolicited=lambda m, ts, v: unsolicited.append((m, ts, v)))
    link.configure("cpu.load", "")
    assert link.get("cpu.load") == ("cpu.load", T0, "0.42")
    sensor.emit("disk.full", "1", T0 + 1)
    assert wait_for(lambda: unsolicited == [("disk.full", T0 + 1, "1")])
    link.quit()


def test_sensor_link_marks_dead_on_violation():
    a, b = socket.socketpair()

    def rogue():
        f = b.makefile("rb")
        f.readline()  # VERSION
        b.sendall(b"OK -\n")
        f.readline()  # GET
        b.sendall(b"TOTALLY BOGUS LINE\n")

    threading.Thread(target=rogue, daemon=True).start()
    link = SensorLink(a, "rogue", timeout=2)
    with pytest.raises((SensorDead, Exception)):
        link.get("m")
    assert link.dead


# ---------------------------------------------------------------------------
# MSA


def make_msa(node="n1", configs=(), attach="protocol", transport=None, clock=time.time):
    cache = MeasurementRepository(InMemoryBackend(), ident=node, clock=clock)
    registry = SensorRegistry()
    registry.register("const", lambda: CallableSensor(lambda m, p: p or "1", clock=clock))
    msa = Msa(node, list(configs), cache, transport, registry, clock=clock, attach=attach)
    return msa, cache


def test_msa_timer_arithmetic():
    # one metric, period 50 ms, 500 ms run -> 10 +/- 1 samples cached
    msa, cache = make_msa(configs=[MetricConfig("m", "const", 0.05, "7")])
    runner = MsaRunner(msa)
    runner.start()
    time.sleep(0.5)
    runner.stop()
    msa.close()
    n = len(cache.series("n1", "m", 0, 2 ** 62))
    assert 9 <= n <= 11


def test_msa_unsolicited_sample_enters_cache_with_own_timestamp():
    sensor_holder = {}

    class Emitting(Sensor):
        def __init__(self):
            super().__init__(clock=lambda: T0)
            sensor_holder["s"] = self

        def sample(self, metric):
            return "polled"

    cache = MeasurementRepository(InMemoryBackend(), ident="n1")
    registry = SensorRegistry()
    registry.register("emit", Emitting)
    msa = Msa("n1", [MetricConfig("disk.full", "emit", 0)], cache, None, registry)
    sensor_holder["s"].emit("disk.full", "1", T0 + 123)
    assert wait_for(lambda: cache.latest("n1", "disk.full") is not None)
    assert cache.latest("n1", "disk.full") == MetricSample("n1", "disk.full", T0 + 123, "1")
    msa.close()


def test_msa_hundred_metric_configuration_runs():
    configs = [MetricConfig(f"metric.{i:03d}", "const", 1.0, str(i)) for i in range(100)]
    msa, cache = make_msa(configs=configs, attach="inline")
    for cfg in configs:
        msa.poll_metric(cfg)
    for i in (0, 50, 99):
        assert cache.latest("n1", f"metric.{i:03d}").value == str(i)
    msa.close()


def test_msa_dead_sensor_self_monitoring():
    class Broken(Sensor):
        def sample(self, metric):
            raise RuntimeError("boom")

    cache = MeasurementRepository(InMemoryBackend(), ident="n1")
    registry = SensorRegistry()
    registry.register("broken", Broken)
    msa = Msa("n1", [MetricConfig("m", "broken", 1.0)], cache, None, registry, attach="inline")
    assert msa.poll_metric(MetricConfig("m", "broken", 1.0)) is None
    assert cache.latest("n1", "msa.sensor.broken.alive").value == "0"
    msa.close()


# ---------------------------------------------------------------------------
# Transports


def test_udp_transport_wire_format():
    repo = MeasurementRepository(InMemoryBackend())
    server = UdpIngestServer(repo)
    tr = UdpTransport(server.address)
    tr.send(MetricSample("n1", "cpu.load", T0, "0.5"))
    assert wait_for(lambda: repo.latest("n1", "cpu.load") is not None)
    assert repo.latest("n1", "cpu.load").value == "0.5"
    tr.close()
    server.close()


def test_tcp_transport_delivery_and_flush():
    repo = MeasurementRepository(InMemoryBackend())
    server = TcpIngestServer(repo)
    tr = TcpTransport(server.address)
    for i in range(200):
        tr.send(MetricSample("n1", "m", T0 + i, str(i)))
    assert tr.flush(10)
    assert wait_for(lambda: len(repo.series("n1", "m", 0, 2 ** 62)) == 200)
    tr.close()
    server.close()


def test_tcp_transport_buffers_while_down_then_reconnects():
    repo = MeasurementRepository(InMemoryBackend())
    # point at a closed port first
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    addr = probe.getsockname()
    probe.close()
    tr = TcpTransport(addr, reconnect_delay=0.05)
    for i in range(50):
        tr.send(MetricSample("n1", "m", T0 + i, str(i)))
    time.sleep(0.2)
    server = TcpIngestServer(repo, host=addr[0], port=addr[1])
    assert wait_for(lambda: len(repo.series("n1", "m", 0, 2 ** 62)) == 50)
    tr.close()
    server.close()


def test_tcp_transport_bounded_buffer_drops_oldest():
    drops = []
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    addr = probe.getsockname()
    probe.close()
    tr = TcpTransport(addr, buffer_max=10, on_drop=drops.append, reconnect_delay=9)
    for i in range(25):
        tr.send_line(f"MON1 n m {T0 + i} v{i}\n")
    assert tr.dropped == 15
    assert drops[-1] == 15
    with tr._cv:
        kept = list(tr._q)
    assert kept[0].split()[4] == "v15"  # oldest were dropped
    tr.close()


def test_proxy_fan_in_connection_count_and_order():
    # 10 leaf nodes, 3 proxies (3,3,4 fan-in) -> repository sees exactly 3
    # inbound connections and per-origin order is preserved.
    repo = MeasurementRepository(InMemoryBackend())
    server = TcpIngestServer(repo)
    upstreams = [TcpTransport(server.address) for _ in range(3)]
    proxies = [TcpProxy(up) for up in upstreams]
    assign = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
    leafs = [TcpTransport(proxies[assign[i]].address) for i in range(10)]
    per_node = 200
    for seq in range(per_node):
        for i, leaf in enumerate(leafs):
            leaf.send(MetricSample(f"leaf{i:02d}", "seq", T0 + seq, str(seq)))
    for leaf in leafs:
        assert leaf.flush(10)
        leaf.close()
    expected = per_node * len(leafs)

    def total():
        return sum(len(repo.series(f"leaf{i:02d}", "seq", 0, 2 ** 62)) for i in range(10))

    assert wait_for(lambda: total() == expected, timeout=20)
    assert server.connections_accepted == 3
    for i in range(10):
        rows = repo.series(f"leaf{i:02d}", "seq", 0, 2 ** 62)
        values = [int(s.value) for s in rows]
        assert values == sorted(values)
        inversions = sum(1 for a, b in zip(values, values[1:]) if a > b)
        assert inversions == 0
    for p in proxies:
        p.close()
    for up in upstreams:
        up.flush(5)
        up.close()
    server.close()


# ---------------------------------------------------------------------------
# HTTP API


def test_repository_http_endpoints():
    repo = MeasurementRepository(InMemoryBackend())
    server = RepositoryHttpServer(repo)
    try:
        for i in range(3):
            repo.ingest(MetricSample("n1", "cpu.load", T0 + i, str(i)))
        status, _, body = http_get(f"{server.url}/api/series?node=n1&metric=cpu.load&t0={T0}&t1={T0 + 1}")
        assert status == 200
        doc = json.loads(body)
        assert doc["version"] == 1
        assert [s["value"] for s in doc["samples"]] == ["0", "1"]

        status, _, body = http_get(f"{server.url}/api/latest?node=n1&metric=cpu.load")
        assert json.loads(body)["sample"]["value"] == "2"

        with pytest.raises(HttpError) as e:
            http_get(f"{server.url}/api/latest?node=n1&metric=nope")
        assert e.value.status == 404

        status, _, _ = http_post_json(f"{server.url}/api/ack",
                                      {"node": "n1", "metric": "cpu.load",
                                       "timestamp": T0, "operator": "op"})
        assert status == 204
        assert repo.latest("n1", "ack.cpu.load").value == f"op {T0}"
    finally:
        server.close()


def test_repository_http_subscribe_stream():
    repo = MeasurementRepository(InMemoryBackend())
    server = RepositoryHttpServer(repo)
    try:
        conn = socket.create_connection(server.address)
        payload = json.dumps({"metric": "cpu.*", "node": "*"}).encode()
        conn.sendall(b"POST /api/subscribe HTTP/1.0\r\nContent-Type: application/json\r\n"
                     + f"Content-Length: {len(payload)}\r\n\r\n".encode() + payload)
        f = conn.makefile("rb")
        while f.readline().strip():
            pass  # headers
        assert wait_for(lambda: len(repo._subs) == 1)
        repo.ingest(MetricSample("n1", "cpu.load", T0, "0.7"))
        line = f.readline().decode()
        assert line == f"MON1 n1 cpu.load {T0} 0.7\n"
        conn.close()
    finally:
        server.close()


def test_msa_exports_transport_drop_counter():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    addr = probe.getsockname()
    probe.close()  # nothing listens: the transport can only buffer
    tr = TcpTransport(addr, buffer_max=2, reconnect_delay=9)
    msa, cache = make_msa(configs=[], transport=tr)
    for i in range(6):
        msa.record(MetricSample("n1", "m", T0 + i, str(i)))
    assert tr.dropped == 4
    assert cache.latest("n1", "msa.transport.dropped").value == "4"
    tr.close()
    msa.close()
