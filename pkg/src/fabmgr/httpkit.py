"""Minimal HTTP service/client helpers over the standard library.

Every network service in this package (repository API, configuration
database, package repository, simulator gateway) is a set of routed handlers
on a threading HTTP server; handlers may stream line-oriented bodies for
server-pushed subscriptions.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import parse_qs, urlparse

log = logging.getLogger(__name__)

STREAMED = object()  # sentinel: handler wrote the response itself


class Request:
    def __init__(self, handler: BaseHTTPRequestHandler, match: re.Match):
        self.handler = handler
        self.match = match
        parsed = urlparse(handler.path)
        self.path = parsed.path
        self.query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        self.headers = handler.headers
        length = int(handler.headers.get("Content-Length") or 0)
        self.body = handler.rfile.read(length) if length else b""

    def json(self):
        return json.loads(self.body.decode("utf-8"))

    # -- streaming ----------------------------------------------------------

    def begin_stream(self, content_type: str = "text/plain; charset=utf-8",
                     extra_headers: Optional[dict] = None) -> None:
        h = self.handler
        h.send_response(200)
        h.send_header("Content-Type", content_type)
        h.send_header("Cache-Control", "no-store")
        h.send_header("Access-Control-Allow-Origin", "*")
        for k, v in (extra_headers or {}).items():
            h.send_header(k, v)
        h.end_headers()

    def stream_write(self, text: str) -> bool:
        try:
            self.handler.wfile.write(text.encode("utf-8"))
            self.handler.wfile.flush()
            return True
        except OSError:
            return False


class Response:
    def __init__(self, status: int = 200, body=b"", headers: Optional[dict] = None,
                 content_type: Optional[str] = None):
        self.status = status
        self.headers = dict(headers or {})
        if isinstance(body, (dict, list)):
            self.body = json.dumps(body).encode("utf-8")
            content_type = content_type or "application/json"
        elif isinstance(body, str):
            self.body = body.encode("utf-8")
            content_type = content_type or "text/plain; charset=utf-8"
        else:
            self.body = body
            content_type = content_type or "application/octet-stream"
        self.headers.setdefault("Content-Type", content_type)


class HttpService:
    """Route table + threading server; routes are (method, compiled regex)."""

    def __init__(self, name: str = "service", host: str = "127.0.0.1", port: int = 0):
        self.name = name
        self._routes: list = []
        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.0"

            def log_message(self, fmt, *args):
                log.debug("%s: %s", service.name, fmt % args)

            def _dispatch(self, method: str):
                for m, pattern, fn in service._routes:
                    if m != method:
                        continue
                    match = pattern.match(urlparse(self.path).path)
                    if match is None:
                        continue
                    try:
                        req = Request(self, match)
                        result = fn(req)
                    except Exception:
                        log.exception("%s handler error on %s", service.name, self.path)
                        result = Response(500, {"error": "internal error"})
                    if result is STREAMED:
                        self.close_connection = True
                        return
                    self.send_response(result.status)
                    body = result.body
                    for k, v in result.headers.items():
                        self.send_header(k, str(v))
                    self.send_header("Content-Length", str(len(body)))
                    self.send_header("Access-Control-Allow-Origin", "*")
                    self.end_headers()
                    if method != "HEAD":
                        self.wfile.write(body)
                    return
                self.send_response(404)
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_PUT(self):
                self._dispatch("PUT")

            def do_HEAD(self):
                self._dispatch("GET")

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type, X-Credential")
                self.send_header("Content-Length", "0")
                self.end_headers()

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.server.daemon_threads = True
        self.address = self.server.server_address
        self._thread = threading.Thread(target=self.server.serve_forever,
                                        name=f"http-{name}", daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        return f"http://{self.address[0]}:{self.address[1]}"

    def add(self, method: str, pattern: str, fn: Callable[[Request], object]) -> None:
        self._routes.append((method, re.compile(pattern + r"\Z"), fn))

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


# ---------------------------------------------------------------------------
# Client helpers


class HttpError(Exception):
    def __init__(self, status: int, body: bytes):
        super().__init__(f"HTTP {status}")
        self.status = status
        self.body = body


def http_request(method: str, url: str, body: Optional[bytes] = None,
                 headers: Optional[dict] = None, timeout: float = 10.0):
    """Returns (status, headers, body); raises HttpError for >= 400, OSError
    on transport failure."""
    req = urllib.request.Request(url, data=body, method=method,
                                 headers=dict(headers or {}))
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, dict(resp.headers), resp.read()
    except urllib.error.HTTPError as e:
        raise HttpError(e.code, e.read()) from None
    except urllib.error.URLError as e:
        raise OSError(str(e.reason)) from None


def http_get(url: str, timeout: float = 10.0):
    return http_request("GET", url, timeout=timeout)


def http_post_json(url: str, payload, headers: Optional[dict] = None, timeout: float = 30.0):
    body = json.dumps(payload).encode("utf-8")
    hdrs = {"Content-Type": "application/json", **(headers or {})}
    return http_request("POST", url, body, hdrs, timeout)
