"""Node configuration deployer: dependency-ordered component execution under
the deployment lock."""

from __future__ import annotations

import fcntl
import heapq
import logging
import os
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..monitoring.sample import MetricSample
from .components import ComponentContext, ComponentRegistry

log = logging.getLogger(__name__)


class NcdError(Exception):
    pass


class NcdBusy(NcdError):
    pass


class DependencyCycle(NcdError):
    pass


@dataclass
class ComponentResult:
    name: str
    status: str  # success | failure | skipped
    message: str = ""
    changed_files: list = field(default_factory=list)
    service_actions: list = field(default_factory=list)


@dataclass
class RunReport:
    results: list
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return all(r.status == "success" for r in self.results)

    @property
    def total_changes(self) -> int:
        return sum(len(r.changed_files) + len(r.service_actions) for r in self.results)

    def format_lines(self) -> str:
        lines = []
        for r in self.results:
            line = (f"{r.name} {r.status} files={len(r.changed_files)} "
                    f"actions={len(r.service_actions)}")
            if r.message:
                line += f" {r.message}"
            lines.append(line)
        return "".join(line + "\n" for line in lines)


class DeploymentLock:
    """flock-backed global node lock; a second holder fails fast."""

    def __init__(self, path: str):
        self.path = path
        self._fd: Optional[int] = None

    def acquire(self) -> None:
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        fd = os.open(self.path, os.O_CREAT | os.O_RDWR, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            os.close(fd)
            raise NcdBusy(f"deployment lock {self.path} is held") from None
        os.ftruncate(fd, 0)
        os.write(fd, f"{os.getpid()}\n".encode())
        self._fd = fd

    def release(self) -> None:
        if self._fd is not None:
            fcntl.flock(self._fd, fcntl.LOCK_UN)
            os.close(self._fd)
            self._fd = None

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()


def resolve_order(registry: ComponentRegistry, requested) -> list:
    """Dependency closure of the requested set in a deterministic topological
    order; cycles abort before anything runs."""
    requested = set(requested)
    closure = set()
    stack = list(requested)
    while stack:
        name = stack.pop()
        if name in closure:
            continue
        closure.add(name)
        comp = registry.get(name)
        if comp is not None:
            stack.extend(comp.dependencies)
    indeg = {}
    dependents: dict[str, list] = {}
    for name in closure:
        comp = registry.get(name)
        deps = [d for d in (comp.dependencies if comp else ()) if d in closure]
        indeg[name] = len(deps)
        for d in deps:
            dependents.setdefault(d, []).append(name)
    ready = [n for n in sorted(closure) if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        name = heapq.heappop(ready)
        order.append(name)
        for dep in dependents.get(name, ()):
            indeg[dep] -= 1
            if indeg[dep] == 0:
                heapq.heappush(ready, dep)
    if len(order) != len(closure):
        cyclic = sorted(closure - set(order))
        raise DependencyCycle(f"dependency cycle among {cyclic}")
    return order


class Ncd:
    def __init__(self, registry: ComponentRegistry, lock_path: str,
                 report_path: Optional[str] = None,
                 report_metric: Optional[Callable[[MetricSample], None]] = None,
                 node: str = "", clock: Callable[[], float] = _time.time):
        self.registry = registry
        self.lock_path = lock_path
        self.report_path = report_path
        self.report_metric = report_metric
        self.node = node
        self.clock = clock

    def run(self, components, ctx: ComponentContext) -> RunReport:
        """Execute the closure of ``components`` sequentially; a failed
        component marks its transitive dependents skipped, never run."""
        with DeploymentLock(self.lock_path):
            started = self.clock()
            order = resolve_order(self.registry, components)  # may raise, pre-run
            results = []
            status: dict[str, str] = {}
            for name in order:
                comp = self.registry.get(name)
                if comp is None:
                    results.append(ComponentResult(name, "failure", "unknown component"))
                    status[name] = "failure"
                    continue
                bad_dep = next((d for d in comp.dependencies
                                if status.get(d) in ("failure", "skipped")), None)
                if bad_dep is not None:
                    results.append(ComponentResult(
                        name, "skipped", f"dependency {bad_dep} did not succeed"))
                    status[name] = "skipped"
                    continue
                cctx = ctx.fresh()
                try:
                    comp.configure(cctx)
                except Exception as e:
                    log.debug("component %s failed", name, exc_info=True)
                    results.append(ComponentResult(name, "failure", str(e)[:300],
                                                   cctx.changed_files, cctx.service_actions))
                    status[name] = "failure"
                    continue
                results.append(ComponentResult(name, "success", "",
                                               cctx.changed_files, cctx.service_actions))
                status[name] = "success"
            report = RunReport(results, self.clock() - started)
        self._emit(report)
        return report

    def _emit(self, report: RunReport) -> None:
        if self.report_path:
            with open(self.report_path, "w", encoding="utf-8") as f:
                f.write(report.format_lines())
        if self.report_metric is not None:
            self.report_metric(MetricSample(self.node or "node", "ncm.run.status",
                                            max(1, int(self.clock())),
                                            "0" if report.ok else "1"))
