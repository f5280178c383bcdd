"""Pluggable sample transports plus the repository-side listeners.

UDP: one datagram per MON1 line, fire-and-forget.  TCP: lines over one
persistent connection with reconnect and a bounded send buffer (oldest lines
dropped on overflow; the drop count is itself exported as a metric).  Proxy
nodes accept TCP connections from leaf agents and relay their lines,
unmodified and in per-origin order, over their single upstream connection.
"""

from __future__ import annotations

import collections
import logging
import socket
import threading
import time
from typing import Callable, Optional

from .repository import MeasurementRepository
from .sample import MetricSample, format_line

log = logging.getLogger(__name__)

_BATCH = 512


class UdpTransport:
    def __init__(self, address: tuple):
        self.address = address
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def send(self, sample: MetricSample) -> None:
        self.send_line(format_line(sample))

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendto(line.encode("utf-8"), self.address)
        except OSError:
            pass  # fire-and-forget

    def flush(self, timeout: float = 0) -> bool:
        return True

    def close(self) -> None:
        self.sock.close()


class TcpTransport:
    """Persistent line connection with reconnect-and-buffer semantics."""

    def __init__(self, address: tuple, buffer_max: int = 100_000,
                 on_drop: Optional[Callable[[int], None]] = None,
                 reconnect_delay: float = 0.2):
        self.address = address
        self.buffer_max = buffer_max
        self.on_drop = on_drop
        self.reconnect_delay = reconnect_delay
        self.dropped = 0
        self._q: collections.deque = collections.deque()
        self._cv = threading.Condition()
        self._closing = False
        self._idle = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def send(self, sample: MetricSample) -> None:
        self.send_line(format_line(sample))

    def send_line(self, line: str) -> None:
        with self._cv:
            if len(self._q) >= self.buffer_max:
                self._q.popleft()
                self.dropped += 1
                if self.on_drop is not None:
                    self.on_drop(self.dropped)
            self._q.append(line)
            self._idle.clear()
            self._cv.notify()

    def _connect(self) -> Optional[socket.socket]:
        while not self._closing:
            try:
                sock = socket.create_connection(self.address, timeout=5)
                # back to blocking: backpressure on an established connection
                # must stall the sender, not look like a connection failure
                sock.settimeout(None)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return sock
            except OSError:
                time.sleep(self.reconnect_delay)
        return None

    def _run(self) -> None:
        sock: Optional[socket.socket] = None
        while True:
            with self._cv:
                while not self._q and not self._closing:
                    self._idle.set()
                    self._cv.wait()
                if self._closing and not self._q:
                    self._idle.set()
                    break
                batch = []
                while self._q and len(batch) < _BATCH:
                    batch.append(self._q.popleft())
            payload = "".join(batch).encode("utf-8")
            while True:
                if sock is None:
                    sock = self._connect()
                    if sock is None:
                        return
                try:
                    sock.sendall(payload)
                    break
                except OSError:
                    try:
                        sock.close()
                    except OSError:
                        pass
                    sock = None
        if sock is not None:
            try:
                sock.close()
            except OSError:
                pass

    def flush(self, timeout: float = 30.0) -> bool:
        return self._idle.wait(timeout)

    def close(self) -> None:
        with self._cv:
            self._closing = True
            self._cv.notify()
        self._thread.join(timeout=30)


class _LineReader:
    """Accumulates socket chunks and yields complete lines."""

    def __init__(self):
        self.buf = b""

    def feed(self, chunk: bytes) -> list:
        self.buf += chunk
        if b"\n" not in self.buf:
            return []
        *lines, self.buf = self.buf.split(b"\n")
        return [ln.decode("utf-8", "replace") + "\n" for ln in lines]


class TcpIngestServer:
    """Accepts MON1 line connections and feeds the repository; counts every
    accepted connection (the proxy fan-in tests read that counter)."""

    def __init__(self, repo: MeasurementRepository, host: str = "127.0.0.1", port: int = 0):
        self.repo = repo
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(128)
        self.address = self.sock.getsockname()
        self.connections_accepted = 0
        self._threads: list = []
        self._closing = False
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while True:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            if self._closing:
                conn.close()
                return
            self.connections_accepted += 1
            t = threading.Thread(target=self._serve, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve(self, conn: socket.socket) -> None:
        reader = _LineReader()
        try:
            while True:
                chunk = conn.recv(1 << 16)
                if not chunk:
                    return
                for line in reader.feed(chunk):
                    self.repo.ingest_line(line)
        except OSError:
            return
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def close(self) -> None:
        self._closing = True
        try:
            self.sock.close()
        except OSError:
            pass


class UdpIngestServer:
    def __init__(self, repo: MeasurementRepository, host: str = "127.0.0.1", port: int = 0):
        self.repo = repo
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.address = self.sock.getsockname()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        while True:
            try:
                data, _ = self.sock.recvfrom(1 << 16)
            except OSError:
                return
            for raw in data.decode("utf-8", "replace").splitlines():
                self.repo.ingest_line(raw + "\n")

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class TcpProxy:
    """Fan-in relay: many downstream agent connections, one upstream
    connection shared with the proxy node's own transport."""

    def __init__(self, upstream: TcpTransport, host: str = "127.0.0.1", port: int = 0):
        self.upstream = upstream
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(128)
        self.address = self.sock.getsockname()
        self.relayed = 0
        self._closing = False
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while True:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            if self._closing:
                conn.close()
                return
            threading.Thread(target=self._relay, args=(conn,), daemon=True).start()

    def _relay(self, conn: socket.socket) -> None:
        reader = _LineReader()
        try:
            while True:
                chunk = conn.recv(1 << 16)
                if not chunk:
                    return
                for line in reader.feed(chunk):
                    self.relayed += 1
                    self.upstream.send_line(line)
        except OSError:
            return
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def close(self) -> None:
        self._closing = True
        try:
            self.sock.close()
        except OSError:
            pass
