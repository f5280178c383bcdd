"""Resource-management stub: production-state bookkeeping with the three
interactions the control loop needs (remove, drain completion, reinstate),
every transition reported as a monitoring metric."""

from __future__ import annotations

from typing import Callable

from ..monitoring.sample import MetricSample

IN_PRODUCTION = "in-production"
DRAINING = "draining"
OUT_OF_PRODUCTION = "out-of-production"


class RmsStub:
    def __init__(self, ingest: Callable[[MetricSample], None], clock,
                 schedule: Callable[[float, Callable], object],
                 log: Callable[[str, str, str], None] = lambda *a: None,
                 drain_delay: float = 1.0):
        self.ingest = ingest
        self.clock = clock
        self.schedule = schedule
        self.log = log
        self.drain_delay = drain_delay
        self.states: dict[str, str] = {}
        self.jobs: dict[str, int] = {}

    def register(self, node: str, jobs: int = 0) -> None:
        self.jobs[node] = jobs
        self._transition(node, IN_PRODUCTION, "rms-register")

    def state(self, node: str) -> str:
        return self.states.get(node, "unknown")

    def remove(self, node: str, mode: str = "drain") -> bool:
        """Take the node out of production; ``drain`` waits for running jobs,
        ``kill`` does not."""
        if self.states.get(node) in (DRAINING, OUT_OF_PRODUCTION):
            return False
        if mode == "kill" or self.jobs.get(node, 0) == 0 and self.drain_delay <= 0:
            self.jobs[node] = 0
            self._transition(node, OUT_OF_PRODUCTION, "rms-remove")
            return True
        self._transition(node, DRAINING, "rms-draining")
        self.schedule(self.drain_delay, lambda: self._drained(node))
        return True

    def _drained(self, node: str) -> None:
        if self.states.get(node) != DRAINING:
            return
        self.jobs[node] = 0
        self._transition(node, OUT_OF_PRODUCTION, "rms-remove")

    def reinstate(self, node: str) -> bool:
        if self.states.get(node) == IN_PRODUCTION:
            return False
        self._transition(node, IN_PRODUCTION, "rms-reinstate")
        return True

    def _transition(self, node: str, state: str, label: str) -> None:
        self.states[node] = state
        # log first: ingestion fans out synchronously and downstream repairs
        # must appear after the transition that caused them
        self.log(node, label, state)
        self.ingest(MetricSample(node, f"rms.state.{node}",
                                 max(1, int(self.clock())), state))
