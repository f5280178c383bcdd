"""Network face of the configuration database: HTTP profile distribution and
the UDP change notifier."""

from __future__ import annotations

import socket

from ..httpkit import HttpService, Request, Response
from .service import (CdbBusy, CdbService, CommitRejected, CommitRequest,
                      UnknownNode, UnknownVersion, format_notification)


class UdpNotifier:
    """Sends ``CDB1 <node> <seq> <hash>`` datagrams to statically registered
    per-node endpoints; fire-and-forget."""

    def __init__(self, endpoints: dict):
        self.endpoints = dict(endpoints)  # node -> (host, port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def register(self, node: str, address: tuple) -> None:
        self.endpoints[node] = address

    def __call__(self, node: str, seq: int, profile_hash: str) -> None:
        addr = self.endpoints.get(node)
        if addr is None:
            return
        try:
            self.sock.sendto(format_notification(node, seq, profile_hash).encode("utf-8"),
                             tuple(addr))
        except OSError:
            pass

    def close(self) -> None:
        self.sock.close()


class CdbHttpServer:
    def __init__(self, service: CdbService, host: str = "127.0.0.1", port: int = 0):
        self.cdb = service
        self.service = HttpService("cdb", host, port)
        self.service.add("GET", r"/profiles/([A-Za-z0-9_.\-]+)", self._profile)
        self.service.add("POST", r"/commit", self._commit)
        self.service.add("GET", r"/history/([A-Za-z0-9_.\-]+)", self._history)
        self.service.add("GET", r"/nodes", self._nodes)

    @property
    def url(self) -> str:
        return self.service.url

    def _profile(self, req: Request) -> Response:
        node = req.match.group(1)
        version = None
        if "version" in req.query:
            try:
                version = int(req.query["version"])
            except ValueError:
                return Response(400, {"error": "version must be an integer"})
        try:
            document, digest, seq = self.cdb.fetch_profile(node, version)
        except UnknownNode:
            return Response(404, {"error": f"unknown node {node!r}"})
        except UnknownVersion:
            return Response(404, {"error": f"unknown version {version}"})
        return Response(200, document,
                        headers={"X-Profile-Hash": digest, "X-Profile-Version": seq},
                        content_type="application/xml")

    def _commit(self, req: Request) -> Response:
        try:
            body = req.json()
            request = CommitRequest(author=body["author"], changes=dict(body["changes"]))
        except Exception:
            return Response(400, {"error": "body must be {author, changes:{name: source|null}}"})
        try:
            version = self.cdb.commit(request)
        except CdbBusy:
            return Response(409, {"error": "busy"})
        except CommitRejected as e:
            return Response(422, {"status": "rejected", "errors": e.errors})
        return Response(200, {"status": "accepted", "version": version.seq,
                              "profiles": version.profiles,
                              "changed_nodes": version.changed_nodes})

    def _history(self, req: Request) -> Response:
        entries = self.cdb.history(req.match.group(1))
        return Response(200, [{"seq": s, "timestamp": t, "author": a}
                              for s, t, a in entries])

    def _nodes(self, req: Request) -> Response:
        return Response(200, {"nodes": self.cdb.nodes()})

    def close(self) -> None:
        self.service.close()
