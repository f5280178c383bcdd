"""HTTP gateway over a live fabric: the operator console's only backend.

Alarm views are derived purely from repository data (exception patterns plus
``ack.*`` overlays); the gateway holds no state of its own, so any number of
console clients can connect and a reload reconstructs identical views.
"""

from __future__ import annotations

import json
import mimetypes
import os
import queue
import threading
from typing import Optional

from ..httpkit import HttpService, Request, Response, STREAMED
from ..monitoring.httpapi import sample_dict
from ..monitoring.sample import MetricSample
from .fabric import Fabric

ALARM_WINDOW = 3600  # seconds of history scanned for first-seen/last-seen


def parse_ack_value(value: str) -> Optional[dict]:
    parts = value.split()
    if len(parts) != 2:
        return None
    try:
        return {"by": parts[0], "at": int(parts[1])}
    except ValueError:
        return None


def compute_alarms(repo, now: int) -> list:
    """Active alarms: liveness metrics stuck at 0 and escalation reports,
    overlaid with operator acknowledgements."""
    alarms = []
    for node, metric in repo.keys():
        if metric.startswith("ack."):
            continue
        escalation = metric.startswith("ft.escalated.")
        liveness = metric.endswith(".alive") or metric == "daemon.alive"
        if not (escalation or liveness):
            continue
        latest = repo.latest(node, metric)
        if latest is None:
            continue
        if liveness and latest.value != "0":
            continue
        rows = repo.series(node, metric, now - ALARM_WINDOW, now + 1)
        active = [s for s in rows if not liveness or s.value == "0"]
        first_seen = active[0].timestamp if active else latest.timestamp
        ack = None
        ack_sample = repo.latest(node, f"ack.{metric}")
        if ack_sample is not None and ack_sample.timestamp >= latest.timestamp:
            ack = parse_ack_value(ack_sample.value)
        alarms.append({"node": node, "metric": metric, "value": latest.value,
                       "first_seen": first_seen, "last_seen": latest.timestamp,
                       "ack": ack, "escalation": escalation})
    alarms.sort(key=lambda a: (a["node"], a["metric"]))
    return alarms


class Gateway:
    def __init__(self, fabric: Fabric, host: str = "127.0.0.1", port: int = 0,
                 console_dir: Optional[str] = None):
        self.fabric = fabric
        self.console_dir = console_dir
        self.service = HttpService("gateway", host, port)
        add = self.service.add
        add("GET", r"/api/alarms", self._alarms)
        add("GET", r"/api/rules", self._rules)
        add("GET", r"/api/nodes", self._nodes)
        add("GET", r"/api/series", self._series)
        add("GET", r"/api/latest", self._latest)
        add("GET", r"/api/stream", self._stream)
        add("POST", r"/api/ack", self._ack)
        add("POST", r"/api/actuate", self._actuate)
        add("POST", r"/api/inject", self._inject)
        add("GET", r"/(.*)", self._static)

    @property
    def url(self) -> str:
        return self.service.url

    def _now(self) -> int:
        return max(1, int(self.fabric.clock.now()))

    def _alarms(self, req: Request) -> Response:
        return Response(200, {"alarms": compute_alarms(self.fabric.global_repo, self._now())})

    def _rules(self, req: Request) -> Response:
        out = []
        for name, node in sorted(self.fabric.nodes.items()):
            for rule in sorted(node.engine.rules.values(), key=lambda r: r.name):
                out.append({
                    "node": name, "name": rule.name, "condition": rule.condition_src,
                    "cooldown": rule.cooldown, "enabled": rule.enabled,
                    "inputs": [{"var": i.var, "metric": i.metric, "node": i.node,
                                "count": i.count_window, "predicate": i.predicate_src or None}
                               for i in rule.inputs],
                    "actuator": {"cmd": rule.actuator.cmd, "args": rule.actuator.args}})
        return Response(200, {"rules": out})

    def _nodes(self, req: Request) -> Response:
        out = []
        for name, node in sorted(self.fabric.nodes.items()):
            entry = node.ccm.current()
            out.append({
                "name": name,
                "production_state": self.fabric.rms.state(name),
                "profile_version": entry.version if entry else None,
                "profile_hash": entry.hash if entry else None,
                "services": {svc: st.running for svc, st in sorted(node.services.items())}})
        return Response(200, {"nodes": out})

    def _series(self, req: Request) -> Response:
        try:
            node, metric = req.query["node"], req.query["metric"]
        except KeyError:
            return Response(400, {"error": "node and metric required"})
        t0 = int(req.query.get("t0", 0) or 0)
        t1 = int(req.query.get("t1", 2 ** 62) or 2 ** 62)
        rows = self.fabric.global_repo.series(node, metric, t0, t1)
        return Response(200, {"version": 1, "samples": [sample_dict(s) for s in rows]})

    def _latest(self, req: Request) -> Response:
        try:
            node, metric = req.query["node"], req.query["metric"]
        except KeyError:
            return Response(400, {"error": "node and metric required"})
        s = self.fabric.global_repo.latest(node, metric)
        if s is None:
            return Response(404, {"error": "no samples"})
        return Response(200, {"version": 1, "sample": sample_dict(s)})

    def _stream(self, req: Request):
        """Server-sent events: every repository sample as an SSE message."""
        q: queue.Queue = queue.Queue(maxsize=2000)
        sub = self.fabric.global_repo.subscribe("*", "*", q.put_nowait)
        req.begin_stream("text/event-stream",
                         extra_headers={"X-Accel-Buffering": "no"})
        try:
            if not req.stream_write("retry: 2000\n\n"):
                return STREAMED
            while True:
                try:
                    s: MetricSample = q.get(timeout=10)
                except queue.Empty:
                    if not req.stream_write(": keepalive\n\n"):
                        return STREAMED
                    continue
                payload = json.dumps(sample_dict(s))
                if not req.stream_write(f"event: sample\ndata: {payload}\n\n"):
                    return STREAMED
        finally:
            self.fabric.global_repo.unsubscribe(sub)
        return STREAMED

    def _ack(self, req: Request) -> Response:
        try:
            body = req.json()
            node, metric = body["node"], body["metric"]
            operator = body["operator"]
            timestamp = int(body.get("timestamp") or 0)
        except Exception:
            return Response(400, {"error": "body must be {node, metric, operator[, timestamp]}"})
        if not timestamp:
            latest = self.fabric.global_repo.latest(node, metric)
            timestamp = latest.timestamp if latest else self._now()
        self.fabric.global_repo.ack(node, metric, timestamp, operator)
        return Response(204)

    def _actuate(self, req: Request) -> Response:
        try:
            body = req.json()
            node = self.fabric.nodes[body["node"]]
            rule = body["rule"]
        except Exception:
            return Response(400, {"error": "body must be {node, rule[, operator]}"})
        operator = body.get("operator", "operator")
        self.fabric.log(node.name, "manual-actuate", f"{rule} by {operator}")
        if not node.engine.manual_dispatch(rule, operator):
            return Response(404, {"error": f"no rule {rule!r} on {node.name} (or busy)"})
        return Response(202, {"status": "dispatched"})

    def _inject(self, req: Request) -> Response:
        try:
            body = req.json()
            node, kind = body["node"], body["kind"]
        except Exception:
            return Response(400, {"error": "body must be {node, kind[, arg]}"})
        try:
            self.fabric.inject_fault(node, kind, body.get("arg", ""))
        except (KeyError, ValueError) as e:
            return Response(400, {"error": str(e)})
        return Response(202, {"status": "injected"})

    def _static(self, req: Request) -> Response:
        if self.console_dir is None:
            return Response(404, {"error": "console not built; api-only gateway"})
        rel = req.match.group(1) or "index.html"
        path = os.path.normpath(os.path.join(self.console_dir, rel))
        if not path.startswith(os.path.normpath(self.console_dir)) or not os.path.isfile(path):
            return Response(404, {"error": "not found"})
        ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
        with open(path, "rb") as f:
            return Response(200, f.read(), content_type=ctype)

    def close(self) -> None:
        self.service.close()


class LiveFabric:
    """Fabric pumped by the wall clock plus its gateway; what `fabctl sim
    serve` runs."""

    def __init__(self, fabric: Fabric, port: int = 0, console_dir: Optional[str] = None,
                 speed: float = 1.0):
        self.fabric = fabric
        self.gateway = Gateway(fabric, port=port, console_dir=console_dir)
        self._stop = threading.Event()
        self._pump = threading.Thread(target=fabric.clock.run_paced,
                                      args=(self._stop, speed), daemon=True)
        self._pump.start()

    def close(self) -> None:
        self._stop.set()
        self._pump.join(timeout=5)
        self.gateway.close()
        self.fabric.close()
