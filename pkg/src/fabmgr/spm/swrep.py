"""Software repository: ACL-guarded uploads, digest-verified downloads,
HTTP distribution.  Multiple independent instances may serve one fabric."""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, replace
from typing import Optional

from ..httpkit import HttpError, HttpService, Request, Response, http_get, http_request


class SwRepError(Exception):
    pass


class Unauthorized(SwRepError):
    pass


class DuplicateRef(SwRepError):
    pass


class DigestMismatch(SwRepError):
    pass


class UnknownPackage(SwRepError):
    pass


@dataclass(frozen=True)
class PackageRef:
    name: str
    version: str
    arch: str
    repo_url: str = ""
    digest: str = ""

    @property
    def filename(self) -> str:
        return f"{self.name}-{self.version}.{self.arch}"

    def key(self) -> tuple:
        return (self.name, self.version, self.arch)


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class SwRep:
    """ACL config maps credential -> list of writable name prefixes
    (an empty prefix grants everything)."""

    def __init__(self, store_dir: str, acl: Optional[dict] = None):
        self.store_dir = store_dir
        self.pkg_dir = os.path.join(store_dir, "packages")
        self.index_path = os.path.join(store_dir, "index.json")
        self.acl = dict(acl or {})
        self._lock = threading.Lock()
        self._index: dict[str, dict] = {}
        os.makedirs(self.pkg_dir, exist_ok=True)
        if os.path.exists(self.index_path):
            with open(self.index_path, encoding="utf-8") as f:
                self._index = json.load(f)

    def _save_index(self) -> None:
        tmp = self.index_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(self._index, f, indent=0, sort_keys=True)
        os.replace(tmp, self.index_path)

    def _authorized(self, credential: Optional[str], name: str) -> bool:
        prefixes = self.acl.get(credential or "")
        if prefixes is None:
            return False
        return any(name.startswith(p) for p in prefixes)

    def upload(self, payload: bytes, meta: PackageRef, credential: Optional[str]) -> PackageRef:
        if not self._authorized(credential, meta.name):
            raise Unauthorized(f"credential lacks write access to {meta.name!r}")
        digest = sha256(payload)
        if meta.digest and meta.digest != digest:
            raise DigestMismatch(f"declared {meta.digest}, payload is {digest}")
        with self._lock:
            if meta.filename in self._index:
                raise DuplicateRef(meta.filename)
            with open(os.path.join(self.pkg_dir, meta.filename), "wb") as f:
                f.write(payload)
            self._index[meta.filename] = {"name": meta.name, "version": meta.version,
                                          "arch": meta.arch, "digest": digest}
            self._save_index()
        return replace(meta, digest=digest)

    def list_packages(self, name_prefix: str = "") -> list:
        with self._lock:
            entries = sorted(self._index.items())
        return [PackageRef(e["name"], e["version"], e["arch"], digest=e["digest"])
                for _, e in entries if e["name"].startswith(name_prefix)]

    def fetch(self, filename: str) -> bytes:
        with self._lock:
            entry = self._index.get(filename)
        if entry is None:
            raise UnknownPackage(filename)
        with open(os.path.join(self.pkg_dir, filename), "rb") as f:
            payload = f.read()
        if sha256(payload) != entry["digest"]:
            raise DigestMismatch(f"stored payload for {filename} is corrupt")
        return payload


class SwRepHttpServer:
    """
    GET /index                     -> {"packages": [{name, version, arch, digest}]}
    GET /pkgs/<filename>           -> payload bytes (X-Package-Digest header)
    PUT /pkgs/<filename>           -> 201; requires X-Credential and the
                                      X-Package-Name/-Version/-Arch headers
    """

    def __init__(self, swrep: SwRep, host: str = "127.0.0.1", port: int = 0):
        self.swrep = swrep
        self.service = HttpService("swrep", host, port)
        self.service.add("GET", r"/index", self._index)
        self.service.add("GET", r"/pkgs/([^/]+)", self._fetch)
        self.service.add("PUT", r"/pkgs/([^/]+)", self._upload)

    @property
    def url(self) -> str:
        return self.service.url

    def _index(self, req: Request) -> Response:
        pkgs = self.swrep.list_packages(req.query.get("prefix", ""))
        return Response(200, {"packages": [
            {"name": p.name, "version": p.version, "arch": p.arch, "digest": p.digest}
            for p in pkgs]})

    def _fetch(self, req: Request) -> Response:
        try:
            payload = self.swrep.fetch(req.match.group(1))
        except UnknownPackage:
            return Response(404, {"error": "unknown package"})
        except DigestMismatch as e:
            return Response(500, {"error": str(e)})
        return Response(200, payload, headers={"X-Package-Digest": sha256(payload)})

    def _upload(self, req: Request) -> Response:
        h = req.headers
        meta = PackageRef(h.get("X-Package-Name", ""), h.get("X-Package-Version", ""),
                          h.get("X-Package-Arch", ""))
        if not (meta.name and meta.version and meta.arch):
            return Response(400, {"error": "X-Package-Name/-Version/-Arch headers required"})
        if meta.filename != req.match.group(1):
            return Response(400, {"error": "filename does not match declared metadata"})
        try:
            stored = self.swrep.upload(req.body, meta, h.get("X-Credential"))
        except Unauthorized as e:
            return Response(403, {"error": str(e)})
        except DuplicateRef as e:
            return Response(409, {"error": f"duplicate package {e}"})
        except DigestMismatch as e:
            return Response(422, {"error": str(e)})
        return Response(201, {"digest": stored.digest})

    def close(self) -> None:
        self.service.close()


# ---------------------------------------------------------------------------
# Clients (the agent's view; in-process for the simulator, HTTP for real use)


class InProcessSwRepClient:
    def __init__(self, swrep: SwRep):
        self.swrep = swrep

    def fetch(self, ref: PackageRef) -> bytes:
        return self.swrep.fetch(ref.filename)

    def index(self) -> list:
        return self.swrep.list_packages()


class HttpSwRepClient:
    def __init__(self, base_url: str, credential: str = "", timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.credential = credential
        self.timeout = timeout

    def fetch(self, ref: PackageRef) -> bytes:
        try:
            _, _, body = http_get(f"{self.base_url}/pkgs/{ref.filename}", timeout=self.timeout)
        except HttpError as e:
            raise UnknownPackage(ref.filename) if e.status == 404 else SwRepError(str(e))
        return body

    def index(self) -> list:
        _, _, body = http_get(f"{self.base_url}/index", timeout=self.timeout)
        entries = json.loads(body)["packages"]
        return [PackageRef(e["name"], e["version"], e["arch"], self.base_url, e["digest"])
                for e in entries]

    def upload(self, payload: bytes, ref: PackageRef) -> str:
        headers = {"X-Credential": self.credential, "X-Package-Name": ref.name,
                   "X-Package-Version": ref.version, "X-Package-Arch": ref.arch,
                   "Content-Type": "application/octet-stream"}
        _, _, body = http_request("PUT", f"{self.base_url}/pkgs/{ref.filename}",
                                  payload, headers, self.timeout)
        return json.loads(body)["digest"]


class SwRepClientPool:
    """Dispatches fetches to the repository named by each ref's URL; the
    simulator registers in-process clients, real deployments HTTP ones."""

    def __init__(self):
        self._clients: dict[str, object] = {}

    def register(self, url: str, client) -> None:
        self._clients[url] = client

    def fetch(self, ref: PackageRef) -> bytes:
        client = self._clients.get(ref.repo_url)
        if client is None:
            # fall back to plain HTTP against the ref's URL
            client = HttpSwRepClient(ref.repo_url)
            self._clients[ref.repo_url] = client
        return client.fetch(ref)
