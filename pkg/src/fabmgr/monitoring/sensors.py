"""Plug-in sensors and the agent<->sensor text protocol.

The protocol runs over a local stream socket, line-oriented UTF-8:

    agent -> sensor:   VERSION 1
                       CONFIG <metric> <params...>
                       GET <reqid> <metric>
                       QUIT
    sensor -> agent:   OK <reqid|->
                       SAMPLE <reqid|-> <metric> <timestamp> <value...>
                       ERROR <reqid|-> <message>

``-`` marks lines with no originating request: unsolicited samples, and the
acknowledgements of VERSION/CONFIG.  A protocol violation drops the
connection and the sensor is considered dead.

Sensors may also be attached "inline" (plain method calls, no socket); the
scale harness uses that, the protocol path is the default.
"""

from __future__ import annotations

import logging
import socket
import threading
import time as _time
from typing import Callable, Optional

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"


class SensorError(Exception):
    pass


class SensorDead(Exception):
    pass


class Sensor:
    """Base class for plug-in sensors."""

    def __init__(self, clock: Callable[[], float] = _time.time):
        self.clock = clock
        self._emit: Optional[Callable[[str, int, str], None]] = None

    def configure(self, metric: str, params: str) -> None:
        pass

    def sample(self, metric: str) -> str:
        raise SensorError(f"metric {metric!r} not supported")

    # -- unsolicited samples -------------------------------------------------

    def attach_emitter(self, emit: Callable[[str, int, str], None]) -> None:
        self._emit = emit

    def emit(self, metric: str, value: str, timestamp: Optional[int] = None) -> None:
        if self._emit is not None:
            self._emit(metric, timestamp or max(1, int(self.clock())), value)


class CallableSensor(Sensor):
    """Wraps ``fn(metric, params) -> str``; params taken from CONFIG."""

    def __init__(self, fn, clock=_time.time):
        super().__init__(clock)
        self.fn = fn
        self.params: dict[str, str] = {}

    def configure(self, metric: str, params: str) -> None:
        self.params[metric] = params

    def sample(self, metric: str) -> str:
        return self.fn(metric, self.params.get(metric, ""))


class SensorRegistry:
    def __init__(self):
        self._factories: dict[str, Callable[[], Sensor]] = {}

    def register(self, name: str, factory: Callable[[], Sensor]) -> None:
        self._factories[name] = factory

    def create(self, name: str) -> Sensor:
        if name not in self._factories:
            raise SensorError(f"no sensor registered under {name!r}")
        return self._factories[name]()


# ---------------------------------------------------------------------------
# Sensor-side protocol host


def serve_sensor(sensor: Sensor, conn: socket.socket) -> None:
    """Speak the sensor side of the protocol until QUIT/EOF/violation."""
    wlock = threading.Lock()

    def send(line: str) -> None:
        with wlock:
            try:
                conn.sendall((line + "\n").encode("utf-8"))
            except OSError:
                pass

    sensor.attach_emitter(
        lambda metric, ts, value: send(f"SAMPLE - {metric} {ts} {value}"))

    buf = b""
    try:
        while True:
            idx = buf.find(b"\n")
            while idx < 0:
                chunk = conn.recv(65536)
                if not chunk:
                    return
                buf += chunk
                idx = buf.find(b"\n")
            line, buf = buf[:idx].decode("utf-8", "replace"), buf[idx + 1:]
            parts = line.split(" ")
            cmd = parts[0] if parts else ""
            if cmd == "VERSION" and len(parts) == 2:
                if parts[1] != PROTOCOL_VERSION:
                    send(f"ERROR - unsupported version {parts[1]}")
                    return
                send("OK -")
            elif cmd == "CONFIG" and len(parts) >= 2:
                try:
                    sensor.configure(parts[1], " ".join(parts[2:]))
                    send("OK -")
                except Exception as e:
                    send(f"ERROR - {e}")
            elif cmd == "GET" and len(parts) == 3:
                reqid, metric = parts[1], parts[2]
                try:
                    value = sensor.sample(metric)
                    ts = max(1, int(sensor.clock()))
                    send(f"SAMPLE {reqid} {metric} {ts} {value}")
                except Exception as e:
                    send(f"ERROR {reqid} {e}")
            elif cmd == "QUIT" and len(parts) == 1:
                return
            else:
                log.debug("sensor protocol violation: %r", line)
                return
    finally:
        try:
            conn.close()
        except OSError:
            pass


def start_sensor_host(sensor: Sensor) -> socket.socket:
    """Run the sensor on its own thread over a socketpair; returns the
    agent-side socket."""
    agent_side, sensor_side = socket.socketpair()
    t = threading.Thread(target=serve_sensor, args=(sensor, sensor_side), daemon=True)
    t.start()
    return agent_side


# ---------------------------------------------------------------------------
# Agent-side link


class SensorLink:
    """Drives one sensor connection; thread-safe GETs plus an unsolicited
    callback.  Any protocol violation marks the link dead."""

    def __init__(self, conn: socket.socket, name: str,
                 on_unsolicited: Optional[Callable[[str, int, str], None]] = None,
                 timeout: float = 10.0):
        self.conn = conn
        self.name = name
        self.on_unsolicited = on_unsolicited
        self.timeout = timeout
        self.dead = False
        self._next_req = 1
        self._pending: dict[str, dict] = {}
        self._acks: list = []
        self._cv = threading.Condition()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._send(f"VERSION {PROTOCOL_VERSION}")
        self._wait_ack()

    def _send(self, line: str) -> None:
        if self.dead:
            raise SensorDead(self.name)
        try:
            self.conn.sendall((line + "\n").encode("utf-8"))
        except OSError:
            self._mark_dead()
            raise SensorDead(self.name) from None

    def _mark_dead(self) -> None:
        with self._cv:
            self.dead = True
            self._cv.notify_all()
        try:
            self.conn.close()
        except OSError:
            pass

    def _read_loop(self) -> None:
        buf = b""
        while True:
            try:
                chunk = self.conn.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            buf += chunk
            while True:
                idx = buf.find(b"\n")
                if idx < 0:
                    break
                line, buf = buf[:idx].decode("utf-8", "replace"), buf[idx + 1:]
                if not self._handle(line):
                    self._mark_dead()
                    return
        self._mark_dead()

    def _handle(self, line: str) -> bool:
        parts = line.split(" ", 4)
        kind = parts[0] if parts else ""
        if kind == "OK" and len(parts) == 2:
            with self._cv:
                self._acks.append(parts[1])
                self._cv.notify_all()
            return True
        if kind == "SAMPLE" and len(parts) == 5:
            _, reqid, metric, ts, value = parts
            try:
                tsec = int(ts)
            except ValueError:
                return False
            if reqid == "-":
                if self.on_unsolicited is not None:
                    self.on_unsolicited(metric, tsec, value)
                return True
            with self._cv:
                slot = self._pending.get(reqid)
                if slot is None:
                    return False
                slot["result"] = (metric, tsec, value)
                self._cv.notify_all()
            return True
        if kind == "ERROR" and len(parts) >= 3:
            reqid = parts[1]
            msg = " ".join(parts[2:])
            if reqid == "-":
                log.debug("sensor %s error: %s", self.name, msg)
                return True
            with self._cv:
                slot = self._pending.get(reqid)
                if slot is None:
                    return False
                slot["error"] = msg
                self._cv.notify_all()
            return True
        return False

    def _wait_ack(self) -> None:
        deadline = _time.monotonic() + self.timeout
        with self._cv:
            while not self._acks and not self.dead:
                left = deadline - _time.monotonic()
                if left <= 0:
                    self._mark_dead()
                    raise SensorDead(self.name)
                self._cv.wait(left)
            if self.dead:
                raise SensorDead(self.name)
            self._acks.pop(0)

    def configure(self, metric: str, params: str = "") -> None:
        self._send(f"CONFIG {metric} {params}" if params else f"CONFIG {metric} ")
        self._wait_ack()

    def get(self, metric: str) -> tuple:
        """Returns (metric, timestamp, value); raises SensorError/SensorDead."""
        reqid = str(self._next_req)
        self._next_req += 1
        slot: dict = {}
        with self._cv:
            self._pending[reqid] = slot
        try:
            self._send(f"GET {reqid} {metric}")
            deadline = _time.monotonic() + self.timeout
            with self._cv:
                while "result" not in slot and "error" not in slot and not self.dead:
                    left = deadline - _time.monotonic()
                    if left <= 0:
                        self._mark_dead()
                        raise SensorDead(self.name)
                    self._cv.wait(left)
                if "result" in slot:
                    return slot["result"]
                if "error" in slot:
                    raise SensorError(slot["error"])
                raise SensorDead(self.name)
        finally:
            with self._cv:
                self._pending.pop(reqid, None)

    def quit(self) -> None:
        try:
            self._send("QUIT")
        except SensorDead:
            pass
        self._mark_dead()


class InlineSensorLink:
    """Protocol-free attachment: the sensor object is called directly."""

    def __init__(self, sensor: Sensor, name: str,
                 on_unsolicited: Optional[Callable[[str, int, str], None]] = None):
        self.sensor = sensor
        self.name = name
        self.dead = False
        if on_unsolicited is not None:
            sensor.attach_emitter(lambda m, ts, v: on_unsolicited(m, ts, v))

    def configure(self, metric: str, params: str = "") -> None:
        self.sensor.configure(metric, params)

    def get(self, metric: str) -> tuple:
        value = self.sensor.sample(metric)
        return metric, max(1, int(self.sensor.clock())), value

    def quit(self) -> None:
        self.dead = True
