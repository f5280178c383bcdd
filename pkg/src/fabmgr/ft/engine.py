"""Stateless correlation engine: decision unit plus actuator agent.

Decisions are a pure function of (rule set, monitoring time series up to
now): cooldowns are computed from the actuator status series, escalation
counting from time-series queries, and acknowledgement suppression from
``ack.*`` samples, so killing and restarting the engine never changes its
subsequent behaviour.  Every dispatch, outcome, indeterminate evaluation and
suppression is reported back to monitoring as ordinary samples.
"""

from __future__ import annotations

import logging
import string
import subprocess
import threading
import time as _time
from dataclasses import dataclass
from typing import Callable, Optional

from .. import exprlang
from ..monitoring.repository import MeasurementRepository
from ..monitoring.sample import MetricSample
from .rules import Rule, load_rules_dir

log = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"
OUTPUT_EXCERPT_LEN = 200


@dataclass(frozen=True)
class ActuatorOutcome:
    rule: str
    command: str
    status: int
    started: float
    finished: float
    output: str


@dataclass(frozen=True)
class Decision:
    rule: str
    action: str  # dispatched | condition-false | indeterminate | suppressed
    reason: str = ""


class ExecActuatorRunner:
    """Runs any executable command; timeout reports status 124, a spawn
    failure 127 (failures are data, they still become metrics)."""

    def run(self, command: str, args: list, timeout: float) -> tuple:
        try:
            proc = subprocess.run([command, *args], capture_output=True,
                                  text=True, timeout=timeout)
            return proc.returncode, (proc.stdout or "") + (proc.stderr or "")
        except subprocess.TimeoutExpired:
            return 124, "timeout"
        except (FileNotFoundError, PermissionError, OSError) as e:
            return 127, str(e)


class CorrelationEngine:
    def __init__(self, node: str, local_repo: MeasurementRepository,
                 global_repo: MeasurementRepository,
                 runner=None,
                 report: Optional[Callable[[MetricSample], None]] = None,
                 clock: Callable[[], float] = _time.time,
                 async_dispatch: bool = False,
                 event_hook: Optional[Callable[[str, str, str], None]] = None):
        self.node = node
        self.local_repo = local_repo
        self.global_repo = global_repo
        self.runner = runner or ExecActuatorRunner()
        self.report = report or local_repo.ingest
        self.clock = clock
        self.async_dispatch = async_dispatch
        self.event_hook = event_hook or (lambda kind, rule, detail: None)
        self.rules: dict[str, Rule] = {}
        self._subs: list = []  # (repo, sub_id)
        self._by_input: dict = {}  # (metric, node) -> [rule names]
        self._running: set = set()
        self._lock = threading.Lock()

    # -- rule management ------------------------------------------------------

    def set_rules(self, rules: list) -> None:
        self.unsubscribe_all()
        self.rules = {r.name: r for r in rules}
        self.subscribe_all()

    def load_rules(self, directory: str) -> list:
        rules, errors = load_rules_dir(directory)
        for e in errors:
            log.warning("rule load: %s", e)
        self.set_rules(rules)
        return errors

    def _resolve(self, input_node: str) -> tuple:
        """(repository, node name) for an input's node selector."""
        if input_node == "self":
            return self.local_repo, self.node
        return self.global_repo, input_node

    def subscribe_all(self) -> None:
        self._by_input = {}
        for rule in self.rules.values():
            for inp in rule.inputs:
                repo, node = self._resolve(inp.node)
                key = (inp.metric, node, id(repo))
                names = self._by_input.setdefault(key, (repo, node, inp.metric, []))[3]
                if rule.name not in names:
                    names.append(rule.name)
        for (metric, node, _), (repo, rnode, rmetric, names) in self._by_input.items():
            sub = repo.subscribe(rmetric, rnode,
                                 lambda s, nn=tuple(names): self._on_samples(nn, s))
            self._subs.append((repo, sub))

    def unsubscribe_all(self) -> None:
        for repo, sub in self._subs:
            repo.unsubscribe(sub)
        self._subs = []

    def _on_samples(self, rule_names: tuple, sample: MetricSample) -> None:
        for name in rule_names:
            rule = self.rules.get(name)
            if rule is not None:
                self.evaluate_rule(rule, sample)

    def on_notification(self, sample: MetricSample) -> list:
        """Re-evaluate every rule that takes this (metric, node) as input."""
        out = []
        for rule in self.rules.values():
            for inp in rule.inputs:
                _, node = self._resolve(inp.node)
                if inp.metric == sample.metric and node == sample.node:
                    out.append(self.evaluate_rule(rule, sample))
                    break
        return out

    # -- evaluation -------------------------------------------------------------

    def _emit(self, metric: str, value: str) -> None:
        self.report(MetricSample(self.node, metric, max(1, int(self.clock())), value))

    def _build_env(self, rule: Rule) -> dict:
        env = {}
        now = int(self.clock())
        for inp in rule.inputs:
            repo, node = self._resolve(inp.node)
            if inp.count_window is not None:
                rows = repo.series(node, inp.metric, now - inp.count_window, now)
                n = 0
                for s in rows:
                    try:
                        if exprlang.evaluate_bool(inp.predicate, {"value": s.value}):
                            n += 1
                    except exprlang.EvalError as e:
                        raise exprlang.EvalError(
                            f"predicate on {inp.metric}: {e}") from None
                env[inp.var] = n
            else:
                latest = repo.latest(node, inp.metric)
                if latest is None:
                    raise exprlang.EvalError(f"no sample yet for {inp.metric} on {node}")
                env[inp.var] = latest.value
        return env

    def evaluate_rule(self, rule: Rule, trigger: Optional[MetricSample] = None) -> Decision:
        if not rule.enabled:
            return Decision(rule.name, "suppressed", "disabled")
        try:
            env = self._build_env(rule)
            fire = exprlang.evaluate_bool(rule.condition, env)
        except exprlang.EvalError as e:
            self._emit(f"ft.indeterminate.{rule.name}", str(e)[:OUTPUT_EXCERPT_LEN] or "error")
            self.event_hook("indeterminate", rule.name, str(e))
            return Decision(rule.name, "indeterminate", str(e))
        if not fire:
            return Decision(rule.name, "condition-false")
        reason = self._suppression_reason(rule)
        if reason is not None:
            self._emit(f"ft.suppressed.{rule.name}", reason)
            self.event_hook("suppressed", rule.name, reason)
            return Decision(rule.name, "suppressed", reason)
        self._dispatch(rule, env, trigger)
        return Decision(rule.name, "dispatched")

    def _suppression_reason(self, rule: Rule) -> Optional[str]:
        now = self.clock()
        # acknowledged escalation: an ack newer than the last escalation fire
        ack = self.global_repo.latest(self.node, f"ack.ft.escalated.{rule.name}")
        if ack is not None:
            fired = self.global_repo.latest(self.node, f"ft.escalated.{rule.name}")
            if fired is None or ack.timestamp >= fired.timestamp:
                return "acked"
        last = self.local_repo.latest(self.node, f"ft.actuator.{rule.name}.status")
        if last is not None and now - last.timestamp < rule.cooldown:
            return "cooldown"
        with self._lock:
            if rule.name in self._running:
                return "busy"
        return None

    # -- actuator agent ------------------------------------------------------------

    def manual_dispatch(self, rule_name: str, operator: str = "operator") -> bool:
        """Operator-initiated dispatch: bypasses condition, cooldown and ack
        suppression; still fully audited."""
        rule = self.rules.get(rule_name)
        if rule is None:
            return False
        with self._lock:
            if rule.name in self._running:
                return False
        try:
            env = self._build_env(rule)
        except exprlang.EvalError:
            env = {}
        self._emit(f"ft.manual.{rule.name}", operator)
        self._dispatch(rule, env, None)
        return True

    def _substitute(self, rule: Rule, env: dict, trigger: Optional[MetricSample]) -> list:
        mapping = {k: str(v) for k, v in env.items()}
        mapping.setdefault("node", self.node)
        mapping.setdefault("rule", rule.name)
        mapping.setdefault("metric", trigger.metric if trigger else "")
        try:
            text = string.Template(rule.actuator.args).safe_substitute(mapping)
        except ValueError:
            text = rule.actuator.args
        return text.split()

    def _dispatch(self, rule: Rule, env: dict, trigger: Optional[MetricSample]) -> None:
        args = self._substitute(rule, env, trigger)
        with self._lock:
            self._running.add(rule.name)
        self._emit(f"ft.dispatch.{rule.name}", trigger.metric if trigger else "manual")
        self.event_hook("dispatch", rule.name, rule.actuator.cmd)
        if self.async_dispatch:
            threading.Thread(target=self._run_actuator, args=(rule, args), daemon=True).start()
        else:
            self._run_actuator(rule, args)

    def _run_actuator(self, rule: Rule, args: list) -> ActuatorOutcome:
        started = self.clock()
        try:
            if rule.actuator.cmd.startswith(BUILTIN_PREFIX):
                status, output = self._run_builtin(rule, args)
            else:
                status, output = self.runner.run(rule.actuator.cmd, args,
                                                 rule.actuator.timeout)
        except Exception as e:
            log.exception("actuator for %s crashed", rule.name)
            status, output = 127, str(e)
        finally:
            with self._lock:
                self._running.discard(rule.name)
        finished = self.clock()
        excerpt = " ".join(output.split())[:OUTPUT_EXCERPT_LEN]
        outcome = ActuatorOutcome(rule.name, rule.actuator.cmd, status,
                                  started, finished, excerpt)
        # feedback to monitoring; the status sample is timestamped at dispatch
        # time, which is what cooldown queries measure from
        self.report(MetricSample(self.node, f"ft.actuator.{rule.name}.status",
                                 max(1, int(started)), str(status)))
        if excerpt:
            self.report(MetricSample(self.node, f"ft.actuator.{rule.name}.output",
                                     max(1, int(started)), excerpt))
        self.event_hook("outcome", rule.name, str(status))
        return outcome

    def _run_builtin(self, rule: Rule, args: list) -> tuple:
        verb = rule.actuator.cmd[len(BUILTIN_PREFIX):]
        if verb == "report-escalation":
            detail = " ".join(args) or "escalated"
            self.report(MetricSample(self.node, f"ft.escalated.{rule.name}",
                                     max(1, int(self.clock())), detail))
            self.event_hook("escalation", rule.name, detail)
            return 0, ""
        if verb == "noop":
            return 0, ""
        if verb == "fail":
            return 1, "builtin failure"
        return 127, f"unknown builtin {verb!r}"
