"""Scenario scripts: timed fault injections and commits plus end-of-run
expectations, exercised against a fabric on the virtual clock.

Script grammar (line-oriented, ``#`` comments):

    at <t> inject <kind> <node> [arg]
    at <t> commit <author> <template> <path> <literal...>
    run-until <t>
    expect-metric <node> <metric> <value>
    expect-order <[node:]label> <[node:]label> ...
    expect-no <[node:]label>
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .fabric import Fabric, T0


class ScenarioError(Exception):
    pass


class ExpectationFailed(AssertionError):
    pass


@dataclass
class ScenarioScript:
    events: list = field(default_factory=list)        # (t, kind, args tuple)
    expect_metric: list = field(default_factory=list)  # (node, metric, value)
    expect_order: list = field(default_factory=list)   # list of expectation lists
    expect_absent: list = field(default_factory=list)
    run_until: float = 30.0

    @classmethod
    def parse(cls, text: str) -> "ScenarioScript":
        script = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "at":
                    t = float(parts[1])
                    kind = parts[2]
                    if kind == "inject":
                        if len(parts) < 5:
                            raise ScenarioError("inject needs <kind> <node> [arg]")
                        script.events.append((t, "inject",
                                              (parts[3], parts[4], " ".join(parts[5:]))))
                    elif kind == "commit":
                        if len(parts) < 7:
                            raise ScenarioError("commit needs <author> <template> <path> <literal>")
                        script.events.append((t, "commit",
                                              (parts[3], parts[4], parts[5],
                                               " ".join(parts[6:]))))
                    else:
                        raise ScenarioError(f"unknown event {kind!r}")
                elif parts[0] == "run-until":
                    script.run_until = float(parts[1])
                elif parts[0] == "expect-metric":
                    script.expect_metric.append((parts[1], parts[2], " ".join(parts[3:])))
                elif parts[0] == "expect-order":
                    script.expect_order.append(parts[1:])
                elif parts[0] == "expect-no":
                    script.expect_absent.append(parts[1])
                else:
                    raise ScenarioError(f"unknown directive {parts[0]!r}")
            except (IndexError, ValueError) as e:
                raise ScenarioError(f"line {lineno}: {e}") from None
        return script


def run_scenario(fabric: Fabric, script: ScenarioScript,
                 check: bool = True) -> "EventLogResult":
    for t, kind, args in script.events:
        if kind == "inject":
            fault, node, arg = args
            fabric.clock.schedule_at(T0 + t, lambda f=fault, n=node, a=arg:
                                     fabric.inject_fault(n, f, a))
        else:
            author, template, path, literal = args
            fabric.clock.schedule_at(T0 + t, lambda a=author, tp=template, p=path,
                                     l=literal: fabric.commit_change(a, tp, p, l))
    fabric.clock.run_until(T0 + script.run_until)
    result = EventLogResult(fabric, script)
    if check and result.failures:
        raise ExpectationFailed("\n".join(result.failures))
    return result


class EventLogResult:
    def __init__(self, fabric: Fabric, script: ScenarioScript):
        self.fabric = fabric
        self.log = fabric.eventlog
        self.failures: list = []
        for node, metric, value in script.expect_metric:
            rows = fabric.global_repo.series(node, metric, 0, 2 ** 62)
            if not any(s.value == value for s in rows):
                self.failures.append(
                    f"expect-metric failed: no {metric}={value!r} sample for {node}")
        for expectations in script.expect_order:
            violated = self.log.find_order(expectations)
            if violated is not None:
                self.failures.append(f"expect-order failed at {violated!r} "
                                     f"(sequence {' '.join(expectations)})")
        for want_absent in script.expect_absent:
            node, _, label = want_absent.rpartition(":")
            for e in self.log.events:
                if e.label == label and (not node or e.node == node):
                    self.failures.append(f"expect-no failed: {want_absent} occurred at "
                                         f"{e.t - self.log.t0:.3f}")
                    break
