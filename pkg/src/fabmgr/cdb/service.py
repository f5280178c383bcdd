"""Configuration database: transactional template commits with
compile-on-commit atomicity, append-only version history, and change
notifications.

Persistence is an append-only content-addressed blob directory plus a
version log of JSON lines; a version is durable once its log line is
fsynced, and notifications are sent only after that point.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..pan import PanError, TemplateStore, compile_profile

log = logging.getLogger(__name__)

NOTIFY_MAGIC = "CDB1"


class CdbError(Exception):
    pass


class CdbBusy(CdbError):
    pass


class UnknownNode(CdbError):
    pass


class UnknownVersion(CdbError):
    pass


class CommitRejected(CdbError):
    def __init__(self, errors: list):
        super().__init__("commit rejected:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class CommitRequest:
    author: str
    # template name -> new source, or None for a tombstone (removal)
    changes: dict

    def __post_init__(self):
        if not self.changes:
            raise ValueError("a commit must change at least one template")


@dataclass
class Version:
    seq: int
    timestamp: float
    author: str
    templates: dict  # name -> blob hash
    profiles: dict   # node -> profile hash (profile bytes stored as blobs)
    changed_nodes: list = field(default_factory=list)


def format_notification(node: str, seq: int, profile_hash: str) -> str:
    return f"{NOTIFY_MAGIC} {node} {seq} {profile_hash}\n"


def parse_notification(datagram: bytes):
    """Returns (node, seq, hash) or None for malformed/foreign datagrams."""
    try:
        parts = datagram.decode("utf-8").strip().split(" ")
    except UnicodeDecodeError:
        return None
    if len(parts) != 4 or parts[0] != NOTIFY_MAGIC:
        return None
    try:
        return parts[1], int(parts[2]), parts[3]
    except ValueError:
        return None


class CdbService:
    def __init__(self, store_dir: str, base: Optional[TemplateStore] = None,
                 wait_for_lock: bool = True,
                 notify: Optional[Callable[[str, int, str], None]] = None,
                 clock: Callable[[], float] = time.time):
        self.store_dir = store_dir
        self.blob_dir = os.path.join(store_dir, "blobs")
        self.log_path = os.path.join(store_dir, "versions.log")
        self.wait_for_lock = wait_for_lock
        self.notify = notify
        self.clock = clock
        self._commit_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._versions: list[Version] = []
        self._sources: dict[str, str] = {}
        os.makedirs(self.blob_dir, exist_ok=True)
        if os.path.exists(self.log_path):
            self._replay_log()
        elif base is not None:
            self.commit(CommitRequest(author="init", changes=base.sources()))

    # -- persistence ----------------------------------------------------------

    def _blob_path(self, digest: str) -> str:
        return os.path.join(self.blob_dir, digest)

    def _write_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self._blob_path(digest)
        if not os.path.exists(path):
            tmp = path + ".tmp"
            with open(tmp, "wb") as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        return digest

    def _read_blob(self, digest: str) -> bytes:
        with open(self._blob_path(digest), "rb") as f:
            return f.read()

    def _append_version(self, v: Version) -> None:
        line = json.dumps({"seq": v.seq, "timestamp": v.timestamp, "author": v.author,
                           "templates": v.templates, "profiles": v.profiles,
                           "changed_nodes": v.changed_nodes})
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _replay_log(self) -> None:
        with open(self.log_path, encoding="utf-8") as f:
            for raw in f:
                raw = raw.strip()
                if not raw:
                    continue
                d = json.loads(raw)
                self._versions.append(Version(d["seq"], d["timestamp"], d["author"],
                                              d["templates"], d["profiles"],
                                              d.get("changed_nodes", [])))
        if self._versions:
            latest = self._versions[-1]
            self._sources = {name: self._read_blob(h).decode("utf-8")
                             for name, h in latest.templates.items()}

    # -- queries ----------------------------------------------------------------

    def latest_version(self) -> Optional[Version]:
        with self._state_lock:
            return self._versions[-1] if self._versions else None

    def current_store(self) -> TemplateStore:
        with self._state_lock:
            return TemplateStore(self._sources)

    def fetch_profile(self, node: str, version: Optional[int] = None):
        """Returns (document bytes, hash, version seq); stored bytes exactly."""
        with self._state_lock:
            if not self._versions:
                raise UnknownNode(node)
            if version is None:
                v = self._versions[-1]
            else:
                idx = version - self._versions[0].seq
                if idx < 0 or idx >= len(self._versions):
                    raise UnknownVersion(str(version))
                v = self._versions[idx]
            if node not in v.profiles:
                raise UnknownNode(node)
            digest = v.profiles[node]
        return self._read_blob(digest), digest, v.seq

    def nodes(self) -> list:
        v = self.latest_version()
        return sorted(v.profiles) if v else []

    def history(self, template: str) -> list:
        """(seq, timestamp, author) entries where the template changed,
        descending by sequence; tombstone entries included."""
        out = []
        with self._state_lock:
            prev_hash = None
            for v in self._versions:
                h = v.templates.get(template)
                if h != prev_hash:
                    out.append((v.seq, v.timestamp, v.author))
                prev_hash = h
        # drop leading "absent" noise: only report versions since first appearance
        out.reverse()
        return out

    # -- include analysis --------------------------------------------------------

    @staticmethod
    def affected_objects(store: TemplateStore, changed: set) -> set:
        """Object templates whose transitive include closure intersects the
        changed set (unknown names contribute nothing)."""
        graph = store.include_graph()
        rev: dict[str, set] = {}
        for name, incs in graph.items():
            for inc in incs:
                rev.setdefault(inc, set()).add(name)
        seen = set()
        stack = list(changed)
        while stack:
            name = stack.pop()
            if name in seen:
                continue
            seen.add(name)
            stack.extend(rev.get(name, ()))
        out = set()
        for name in seen:
            if name not in graph:
                continue
            try:
                tpl = store.get(name)
            except PanError:
                continue
            if tpl is not None and tpl.is_object:
                out.add(name)
        return out

    def affected_nodes(self, changed: set) -> set:
        return self.affected_objects(self.current_store(), set(changed))

    # -- commit -------------------------------------------------------------------

    def commit(self, req: CommitRequest) -> Version:
        if not self._commit_lock.acquire(blocking=self.wait_for_lock):
            raise CdbBusy("another commit is in flight")
        try:
            return self._commit_locked(req)
        finally:
            self._commit_lock.release()

    def _commit_locked(self, req: CommitRequest) -> Version:
        old_store = self.current_store()
        new_sources = dict(old_store.sources())
        for name, source in req.changes.items():
            if source is None:
                new_sources.pop(name, None)
            else:
                new_sources[name] = source
        new_store = TemplateStore(new_sources)
        changed = set(req.changes)

        errors = []
        affected = (self.affected_objects(old_store, changed)
                    | self.affected_objects(new_store, changed))
        compiled = {}
        for node in sorted(affected):
            if new_store.source(node) is None:
                continue  # node template removed in this commit
            try:
                compiled[node] = compile_profile(node, new_store)
            except PanError as e:
                errors.append(f"{node}: {e}")
        if errors:
            raise CommitRejected(errors)

        prev = self.latest_version()
        profiles = dict(prev.profiles) if prev else {}
        for node in list(profiles):
            if new_store.source(node) is None or not _is_object(new_store, node):
                del profiles[node]
        changed_nodes = []
        for node, cp in compiled.items():
            self._write_blob(cp.document)
            if profiles.get(node) != cp.hash:
                changed_nodes.append(node)
            profiles[node] = cp.hash

        templates = {name: self._write_blob(src.encode("utf-8"))
                     for name, src in new_sources.items()}
        version = Version(seq=(prev.seq + 1 if prev else 1), timestamp=self.clock(),
                          author=req.author, templates=templates, profiles=profiles,
                          changed_nodes=sorted(changed_nodes))
        self._append_version(version)
        with self._state_lock:
            self._versions.append(version)
            self._sources = new_sources
        self.notify_changed(version)
        return version

    def notify_changed(self, version: Version) -> None:
        """Best-effort datagram per changed node; loss is tolerated because
        the cache managers also poll."""
        if self.notify is None:
            return
        for node in version.changed_nodes:
            try:
                self.notify(node, version.seq, version.profiles[node])
            except Exception:
                log.debug("notification to %s failed", node, exc_info=True)


def _is_object(store: TemplateStore, name: str) -> bool:
    try:
        tpl = store.get(name)
    except PanError:
        return False
    return tpl is not None and tpl.is_object
