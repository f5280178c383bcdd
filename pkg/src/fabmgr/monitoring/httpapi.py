"""HTTP face of the measurement repository.

Body format version 1.  Endpoints:

    GET  /api/series?node=&metric=&t0=&t1=   -> {"version": 1, "samples": [...]}
    GET  /api/latest?node=&metric=           -> {"version": 1, "sample": {...}} | 404
    POST /api/subscribe {"metric": p, "node": p}
         -> server-pushed stream of MON1 lines (PING lines are keepalive)
    POST /api/ack {"node", "metric", "timestamp", "operator"} -> 204
"""

from __future__ import annotations

import queue

from ..httpkit import HttpService, Request, Response, STREAMED
from .repository import MeasurementRepository
from .sample import MetricSample, format_line

API_VERSION = 1


def sample_dict(s: MetricSample) -> dict:
    return {"node": s.node, "metric": s.metric, "timestamp": s.timestamp, "value": s.value}


class RepositoryHttpServer:
    def __init__(self, repo: MeasurementRepository, host: str = "127.0.0.1", port: int = 0):
        self.repo = repo
        self.service = HttpService("monrepo", host, port)
        self.service.add("GET", r"/api/series", self._series)
        self.service.add("GET", r"/api/latest", self._latest)
        self.service.add("POST", r"/api/subscribe", self._subscribe)
        self.service.add("POST", r"/api/ack", self._ack)

    @property
    def url(self) -> str:
        return self.service.url

    @property
    def address(self) -> tuple:
        return self.service.address

    def _series(self, req: Request) -> Response:
        try:
            node = req.query["node"]
            metric = req.query["metric"]
            t0 = int(req.query.get("t0", 0) or 0)
            t1 = int(req.query.get("t1", 2 ** 62) or 2 ** 62)
        except (KeyError, ValueError):
            return Response(400, {"error": "node, metric, and integer t0/t1 required"})
        rows = self.repo.series(node, metric, t0, t1)
        return Response(200, {"version": API_VERSION, "samples": [sample_dict(s) for s in rows]})

    def _latest(self, req: Request) -> Response:
        try:
            node = req.query["node"]
            metric = req.query["metric"]
        except KeyError:
            return Response(400, {"error": "node and metric required"})
        s = self.repo.latest(node, metric)
        if s is None:
            return Response(404, {"error": "no samples"})
        return Response(200, {"version": API_VERSION, "sample": sample_dict(s)})

    def _subscribe(self, req: Request):
        try:
            spec = req.json()
            metric = spec["metric"]
            node = spec["node"]
        except Exception:
            return Response(400, {"error": "body must be {metric, node}"})
        q: queue.Queue = queue.Queue(maxsize=1000)
        sub_id = self.repo.subscribe(metric, node, q.put_nowait)
        req.begin_stream()
        try:
            while True:
                try:
                    s = q.get(timeout=15)
                except queue.Empty:
                    if not req.stream_write("PING\n"):
                        return STREAMED
                    continue
                if not req.stream_write(format_line(s)):
                    return STREAMED
        finally:
            self.repo.unsubscribe(sub_id)
        return STREAMED

    def _ack(self, req: Request) -> Response:
        try:
            spec = req.json()
            self.repo.ack(spec["node"], spec["metric"], int(spec["timestamp"]),
                          spec["operator"])
        except Exception:
            return Response(400, {"error": "body must be {node, metric, timestamp, operator}"})
        return Response(204)

    def close(self) -> None:
        self.service.close()
