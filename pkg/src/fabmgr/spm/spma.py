"""Node-side package agent: diffs desired against installed, prefetches
payloads into the local cache, and applies the whole operation set as one
transaction through a pluggable packager."""

from __future__ import annotations

import logging
import os
import time as _time
from dataclasses import dataclass
from typing import Callable, Optional

from .swrep import PackageRef, SwRepError, sha256
from .version import compare_versions

log = logging.getLogger(__name__)


class SpmaError(Exception):
    pass


class DiffError(SpmaError):
    pass


class PrefetchError(SpmaError):
    pass


@dataclass(frozen=True)
class PackageOp:
    kind: str  # install | upgrade | downgrade | remove
    name: str
    arch: str
    ref: Optional[PackageRef] = None  # payload source; None for removes
    from_version: str = ""
    to_version: str = ""


@dataclass(frozen=True)
class PackageTransaction:
    ops: tuple

    def __len__(self):
        return len(self.ops)

    def payload_ops(self) -> list:
        return [op for op in self.ops if op.kind != "remove"]


@dataclass(frozen=True)
class SpmaPolicy:
    mode: str = "full"  # full | light
    light_prefixes: tuple = ()

    def __post_init__(self):
        if self.mode not in ("full", "light"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "light" and not self.light_prefixes:
            raise ValueError("light mode needs at least one name prefix")

    def covers(self, name: str) -> bool:
        if self.mode == "full":
            return True
        return any(name.startswith(p) for p in self.light_prefixes)


def spma_diff(desired: list, installed: dict, policy: SpmaPolicy = SpmaPolicy()) -> PackageTransaction:
    """installed: (name, arch) -> version.  In light mode both sets are
    restricted to the policy prefixes first, so packages outside them are
    never touched (in particular never removed)."""
    want: dict[tuple, PackageRef] = {}
    for ref in desired:
        if not policy.covers(ref.name):
            continue
        key = (ref.name, ref.arch)
        if key in want and want[key].version != ref.version:
            raise DiffError(f"conflicting desired versions for {ref.name}.{ref.arch}: "
                            f"{want[key].version} vs {ref.version}")
        want[key] = ref
    have = {key: v for key, v in installed.items() if policy.covers(key[0])}

    ops = []
    for key in sorted(set(want) | set(have)):
        name, arch = key
        if key not in have:
            ops.append(PackageOp("install", name, arch, want[key],
                                 to_version=want[key].version))
        elif key not in want:
            ops.append(PackageOp("remove", name, arch, from_version=have[key]))
        else:
            cur, new = have[key], want[key].version
            order = compare_versions(new, cur)
            if order > 0:
                ops.append(PackageOp("upgrade", name, arch, want[key],
                                     from_version=cur, to_version=new))
            elif order < 0:
                ops.append(PackageOp("downgrade", name, arch, want[key],
                                     from_version=cur, to_version=new))
    return PackageTransaction(tuple(ops))


def apply_to_set(txn: PackageTransaction, installed: dict) -> dict:
    """Pure set-level application (the reconciliation oracle's other half
    lives in the tests; this one backs status displays)."""
    out = dict(installed)
    for op in txn.ops:
        key = (op.name, op.arch)
        if op.kind == "remove":
            out.pop(key, None)
        else:
            out[key] = op.to_version
    return out


# ---------------------------------------------------------------------------
# Prefetch cache


def cache_path(cache_dir: str, ref: PackageRef) -> str:
    return os.path.join(cache_dir, ref.filename)


def cache_prefetch(txn: PackageTransaction, cache_dir: str, fetcher) -> int:
    """Download and digest-verify every payload before apply begins; apply
    reads only from this cache.  Any failure aborts the run up front."""
    os.makedirs(cache_dir, exist_ok=True)
    fetched = 0
    for op in txn.payload_ops():
        ref = op.ref
        path = cache_path(cache_dir, ref)
        if ref.digest and os.path.exists(path):
            with open(path, "rb") as f:
                if sha256(f.read()) == ref.digest:
                    continue  # cache hit
        try:
            payload = fetcher.fetch(ref)
        except (SwRepError, OSError) as e:
            raise PrefetchError(f"{ref.filename}: {e}") from None
        if ref.digest and sha256(payload) != ref.digest:
            raise PrefetchError(f"{ref.filename}: digest mismatch")
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
        fetched += 1
    return fetched


# ---------------------------------------------------------------------------
# Agent facade


@dataclass
class ApplyReport:
    ok: bool
    operations: int
    message: str = ""
    wall_time: float = 0.0


def parse_config_line(line: str) -> PackageRef:
    parts = line.split()
    if len(parts) != 4:
        raise SpmaError(f"bad desired-package line {line!r}")
    name, version, arch, url = parts
    return PackageRef(name, version, arch, repo_url=url)


def format_config_file(refs: list) -> str:
    lines = [f"{r.name} {r.version} {r.arch} {r.repo_url}"
             for r in sorted(refs, key=lambda r: (r.name, r.arch))]
    return "".join(line + "\n" for line in lines)


def load_config_file(path: str) -> list:
    refs = []
    with open(path, encoding="utf-8") as f:
        for raw in f:
            raw = raw.strip()
            if raw and not raw.startswith("#"):
                refs.append(parse_config_line(raw))
    return refs


class Spma:
    def __init__(self, node: str, packager, fetcher, cache_dir: str,
                 policy: SpmaPolicy = SpmaPolicy(),
                 report: Optional[Callable] = None,
                 clock: Callable[[], float] = _time.time):
        self.node = node
        self.packager = packager
        self.fetcher = fetcher
        self.cache_dir = cache_dir
        self.policy = policy
        self.report = report  # callable(MetricSample) or None
        self.clock = clock

    def installed(self) -> dict:
        return self.packager.installed()

    def diff(self, desired: list) -> PackageTransaction:
        return spma_diff(desired, self.installed(), self.policy)

    def run(self, desired: list) -> ApplyReport:
        started = self.clock()
        try:
            txn = self.diff(desired)
            cache_prefetch(txn, self.cache_dir, self.fetcher)
            self.packager.apply(txn, self.cache_dir)
            report = ApplyReport(True, len(txn), wall_time=self.clock() - started)
        except SpmaError as e:
            report = ApplyReport(False, 0, str(e), wall_time=self.clock() - started)
        self._post_status(report)
        return report

    def _post_status(self, report: ApplyReport) -> None:
        if self.report is None:
            return
        from ..monitoring.sample import MetricSample

        value = "0" if report.ok else "1"
        self.report(MetricSample(self.node, "spma.apply.status",
                                 max(1, int(self.clock())), value))
