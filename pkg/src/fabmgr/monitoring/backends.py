"""Pluggable measurement storage.

The flat-file backend keeps one file per metric per day with lines of
``<timestamp> <value>``; the same layout serves as the node-local cache
("local" mode, no per-node directory level) and as a repository store
("global" mode, one directory per node).
"""

from __future__ import annotations

import abc
import os
import threading
from datetime import datetime, timezone
from typing import Optional

from .sample import MetricSample


class RepositoryBackend(abc.ABC):
    @abc.abstractmethod
    def store(self, sample: MetricSample) -> None: ...

    @abc.abstractmethod
    def series(self, node: str, metric: str, t0: int, t1: int) -> list: ...

    @abc.abstractmethod
    def latest(self, node: str, metric: str) -> Optional[MetricSample]: ...

    def keys(self) -> list:
        """Known (node, metric) pairs; optional capability used by views."""
        return []


class InMemoryBackend(RepositoryBackend):
    def __init__(self):
        self._series: dict = {}
        self._lock = threading.Lock()

    def store(self, sample: MetricSample) -> None:
        with self._lock:
            self._series.setdefault((sample.node, sample.metric), []).append(sample)

    def series(self, node: str, metric: str, t0: int, t1: int) -> list:
        with self._lock:
            rows = list(self._series.get((node, metric), ()))
        rows = [s for s in rows if t0 <= s.timestamp <= t1]
        rows.sort(key=lambda s: s.timestamp)  # stable: arrival order kept on ties
        return rows

    def latest(self, node: str, metric: str) -> Optional[MetricSample]:
        with self._lock:
            rows = self._series.get((node, metric))
            if not rows:
                return None
            best = rows[0]
            for s in rows[1:]:
                if s.timestamp >= best.timestamp:
                    best = s
            return best

    def keys(self) -> list:
        with self._lock:
            return sorted(self._series)


_MAX_DAY_TS = 253402300799  # 9999-12-31T23:59:59Z


def day_of(timestamp: int) -> str:
    timestamp = min(max(timestamp, 0), _MAX_DAY_TS)
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).strftime("%Y-%m-%d")


class FlatFileBackend(RepositoryBackend):
    """``<root>[/<node>]/<metric>/<YYYY-MM-DD>`` append-only text files."""

    def __init__(self, root: str, node: Optional[str] = None, max_open_files: int = 64):
        # node set => local-cache layout without the node directory level
        self.root = root
        self.node = node
        self._lock = threading.Lock()
        self._open: dict = {}  # (node, metric, day) -> file handle, LRU by insertion
        self._latest: dict = {}
        self._max_open = max_open_files
        os.makedirs(root, exist_ok=True)

    def _metric_dir(self, node: str, metric: str) -> str:
        if self.node is not None:
            return os.path.join(self.root, metric)
        return os.path.join(self.root, node, metric)

    def store(self, sample: MetricSample) -> None:
        day = day_of(sample.timestamp)
        key = (sample.node, sample.metric, day)
        with self._lock:
            fh = self._open.get(key)
            if fh is None:
                d = self._metric_dir(sample.node, sample.metric)
                os.makedirs(d, exist_ok=True)
                fh = open(os.path.join(d, day), "a", encoding="utf-8")
                self._open[key] = fh
                while len(self._open) > self._max_open:
                    oldest = next(iter(self._open))
                    self._open.pop(oldest).close()
            fh.write(f"{sample.timestamp} {sample.value}\n")
            fh.flush()
            lkey = (sample.node, sample.metric)
            prev = self._latest.get(lkey)
            if prev is None or sample.timestamp >= prev.timestamp:
                self._latest[lkey] = sample

    def series(self, node: str, metric: str, t0: int, t1: int) -> list:
        if self.node is not None and node != self.node:
            return []
        if t1 < t0:
            return []
        d = self._metric_dir(node, metric)
        if not os.path.isdir(d):
            return []
        lo, hi = day_of(t0), day_of(t1)
        out = []
        for day in sorted(os.listdir(d)):
            if not (lo <= day <= hi):
                continue
            out.extend(s for s in read_cache_file(os.path.join(d, day), node, metric)
                       if t0 <= s.timestamp <= t1)
        out.sort(key=lambda s: s.timestamp)
        return out

    def latest(self, node: str, metric: str) -> Optional[MetricSample]:
        if self.node is not None and node != self.node:
            return None
        with self._lock:
            got = self._latest.get((node, metric))
        if got is not None:
            return got
        d = self._metric_dir(node, metric)
        if not os.path.isdir(d):
            return None
        days = sorted(os.listdir(d), reverse=True)
        for day in days:
            rows = read_cache_file(os.path.join(d, day), node, metric)
            if rows:
                best = rows[0]
                for s in rows[1:]:
                    if s.timestamp >= best.timestamp:
                        best = s
                with self._lock:
                    self._latest[(node, metric)] = best
                return best
        return None

    def keys(self) -> list:
        out = []
        if self.node is not None:
            if os.path.isdir(self.root):
                out = [(self.node, m) for m in os.listdir(self.root)]
        else:
            for node in os.listdir(self.root) if os.path.isdir(self.root) else []:
                nd = os.path.join(self.root, node)
                if os.path.isdir(nd):
                    out.extend((node, m) for m in os.listdir(nd))
        return sorted(out)

    def close(self) -> None:
        with self._lock:
            for fh in self._open.values():
                fh.close()
            self._open.clear()


def read_cache_file(path: str, node: str, metric: str) -> list:
    """Parse a ``<timestamp> <value>`` cache file into samples."""
    out = []
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                ts, _, value = line.partition(" ")
                try:
                    out.append(MetricSample(node, metric, int(ts), value))
                except ValueError:
                    continue
    except FileNotFoundError:
        pass
    return out
