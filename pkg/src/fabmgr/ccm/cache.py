"""Configuration cache manager: atomically caches the node profile, survives
database outages (disconnected operation), and hides the document schema
behind path-based accessors."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .. import pan
from ..cdb.service import parse_notification
from ..httpkit import HttpError, http_get

log = logging.getLogger(__name__)

DEFAULT_POLL_PERIOD = 60.0
DEFAULT_KEEP = 2


class CcmError(Exception):
    pass


class CacheEmpty(CcmError):
    """No profile has ever been cached on this node."""


class PathNotFound(CcmError):
    """The cached profile has no value at the requested path."""


class FetchFailed(CcmError):
    """The database was unreachable or answered badly; cache untouched."""


@dataclass(frozen=True)
class CachedProfile:
    document: bytes
    tree: pan.Interior
    hash: str
    version: int
    fetched_at: float


class HttpProfileFetcher:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def __call__(self, node: str):
        try:
            status, headers, body = http_get(f"{self.base_url}/profiles/{node}",
                                             timeout=self.timeout)
        except (OSError, HttpError) as e:
            raise FetchFailed(str(e)) from None
        digest = headers.get("X-Profile-Hash")
        try:
            seq = int(headers.get("X-Profile-Version", "0"))
        except ValueError:
            raise FetchFailed("bad X-Profile-Version header") from None
        if not digest:
            raise FetchFailed("missing X-Profile-Hash header")
        return body, digest, seq


class Ccm:
    """One fetcher, many concurrent readers; the cache swap is atomic and a
    crash between file write and pointer update leaves the old generation
    current."""

    def __init__(self, node: str, cache_dir: str, fetcher: Callable,
                 keep: int = DEFAULT_KEEP, clock: Callable[[], float] = time.time,
                 schedule_fetch: Optional[Callable[[], None]] = None):
        self.node = node
        self.cache_dir = cache_dir
        self.fetcher = fetcher
        self.keep = max(1, keep)
        self.clock = clock
        self._schedule_fetch = schedule_fetch or self._fetch_quietly
        self._lock = threading.Lock()
        self._current: Optional[CachedProfile] = None
        os.makedirs(cache_dir, exist_ok=True)
        self._load_from_disk()

    # -- disk layout: profile.<seq>.<hash> files plus a `current` pointer ----

    def _pointer_path(self) -> str:
        return os.path.join(self.cache_dir, "current")

    def _profile_path(self, seq: int, digest: str) -> str:
        return os.path.join(self.cache_dir, f"profile.{seq}.{digest}")

    def _load_from_disk(self) -> None:
        try:
            with open(self._pointer_path(), encoding="utf-8") as f:
                fname = f.read().strip()
            path = os.path.join(self.cache_dir, fname)
            with open(path, "rb") as f:
                document = f.read()
            _, seq_s, digest = fname.split(".", 2)
            name, tree = pan.parse_profile(document)
            self._current = CachedProfile(document, tree, digest, int(seq_s), 0.0)
        except FileNotFoundError:
            return
        except Exception:
            log.warning("cache at %s is unreadable; starting empty", self.cache_dir,
                        exc_info=True)

    def _persist(self, document: bytes, digest: str, seq: int) -> None:
        path = self._profile_path(seq, digest)
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(document)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
        ptmp = self._pointer_path() + ".tmp"
        with open(ptmp, "w", encoding="utf-8") as f:
            f.write(os.path.basename(path) + "\n")
            f.flush()
            os.fsync(f.fileno())
        os.replace(ptmp, self._pointer_path())
        self._prune(keep_file=os.path.basename(path))

    def _prune(self, keep_file: str) -> None:
        entries = []
        for fn in os.listdir(self.cache_dir):
            if fn.startswith("profile.") and not fn.endswith(".tmp"):
                try:
                    seq = int(fn.split(".", 2)[1])
                except (IndexError, ValueError):
                    continue
                entries.append((seq, fn))
        entries.sort(reverse=True)
        for _, fn in entries[self.keep:]:
            if fn != keep_file:
                try:
                    os.unlink(os.path.join(self.cache_dir, fn))
                except OSError:
                    pass

    # -- fetching ---------------------------------------------------------------

    def fetch_and_cache(self, force: bool = False) -> CachedProfile:
        """Download the latest profile; unchanged hashes leave the cache
        untouched unless forced.  On failure the previous cache generation
        keeps being served and FetchFailed is raised."""
        try:
            document, digest, seq = self.fetcher(self.node)
        except FetchFailed:
            raise
        except Exception as e:
            raise FetchFailed(str(e)) from None
        cur = self._current
        if cur is not None and cur.hash == digest and not force:
            return cur
        try:
            name, tree = pan.parse_profile(document)
        except Exception as e:
            raise FetchFailed(f"unparsable profile document: {e}") from None
        if name != self.node:
            raise FetchFailed(f"profile is for node {name!r}, not {self.node!r}")
        entry = CachedProfile(document, tree, digest, seq, self.clock())
        self._persist(document, digest, seq)
        with self._lock:
            self._current = entry
        return entry

    def _fetch_quietly(self) -> None:
        try:
            self.fetch_and_cache()
        except FetchFailed:
            log.debug("scheduled fetch failed; serving cached profile")

    def handle_notification(self, datagram: bytes) -> bool:
        """Schedule an immediate fetch for a valid notification addressed to
        this node with an unseen hash; anything else is silently ignored."""
        parsed = parse_notification(datagram)
        if parsed is None:
            return False
        node, seq, digest = parsed
        if node != self.node:
            return False
        cur = self._current
        if cur is not None and cur.hash == digest:
            return False
        self._schedule_fetch()
        return True

    # -- node view access ---------------------------------------------------------

    def _tree(self) -> CachedProfile:
        cur = self._current
        if cur is None:
            raise CacheEmpty(self.node)
        return cur

    def get(self, path: str):
        """Typed value at an absolute path: returns (type_tag, value)."""
        cur = self._tree()
        node = pan.lookup(cur.tree, pan.parse_path(path))
        if node is None:
            raise PathNotFound(path)
        if isinstance(node, pan.Interior):
            raise PathNotFound(f"{path} is an interior node, not a value")
        return node.tag, node.value

    def subtree(self, path: str) -> pan.Interior:
        cur = self._tree()
        if path == "/":
            return cur.tree
        node = pan.lookup(cur.tree, pan.parse_path(path))
        if node is None:
            raise PathNotFound(path)
        if not isinstance(node, pan.Interior):
            raise PathNotFound(f"{path} is a value, not a subtree")
        return node

    def profile_version(self):
        cur = self._tree()
        return cur.version, cur.hash

    def current(self) -> Optional[CachedProfile]:
        return self._current


class CcmUdpListener:
    """Real-socket notification listener."""

    def __init__(self, ccm: Ccm, host: str = "127.0.0.1", port: int = 0):
        import socket

        self.ccm = ccm
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.address = self.sock.getsockname()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        while True:
            try:
                data, _ = self.sock.recvfrom(65536)
            except OSError:
                return
            self.ccm.handle_notification(data)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class CcmPoller:
    """Wall-clock polling loop; notifications only accelerate convergence."""

    def __init__(self, ccm: Ccm, period: float = DEFAULT_POLL_PERIOD):
        self.ccm = ccm
        self.period = period
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True)

    def start(self) -> None:
        self._thread.start()

    def _loop(self) -> None:
        while not self._stop.wait(self.period):
            try:
                self.ccm.fetch_and_cache()
            except FetchFailed:
                pass

    def stop(self) -> None:
        self._stop.set()
