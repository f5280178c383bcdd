"""Rule documents for the correlation engine.

File format (one rule per XML document):

    <rule name="restart-httpd" cooldown="60">
      <input var="alive" metric="daemon.alive" node="self"/>
      <input var="nfail" metric="ft.actuator.restart-httpd.status" node="self"
             count="300" predicate="value != 0"/>
      <condition>alive == 0</condition>
      <actuator cmd="/usr/bin/restart-daemon" args="${metric}"/>
    </rule>

A plain input binds its variable to the latest sample value of (metric,
node); a ``count`` input binds the number of samples in the trailing window
of that many seconds whose value satisfies the predicate (a time-series
query, which is what keeps retry/escalation counting out of engine state).
``node`` is ``self`` or an explicit node name.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Optional

from .. import exprlang

DEFAULT_COOLDOWN = 60.0
DEFAULT_ACTUATOR_TIMEOUT = 60.0


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class RuleInput:
    var: str
    metric: str
    node: str = "self"  # "self" or an explicit node name
    count_window: Optional[int] = None  # seconds; None = latest-value binding
    predicate: Optional[exprlang.Expr] = None
    predicate_src: str = ""


@dataclass(frozen=True)
class Actuator:
    cmd: str
    args: str = ""
    timeout: float = DEFAULT_ACTUATOR_TIMEOUT


@dataclass(frozen=True)
class Rule:
    name: str
    inputs: tuple
    condition: exprlang.Expr
    condition_src: str
    actuator: Actuator
    cooldown: float = DEFAULT_COOLDOWN
    enabled: bool = True


def parse_rule(document: bytes) -> Rule:
    """Parse and fully validate one rule document."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as e:
        raise RuleError(f"not well-formed XML: {e}") from None
    if root.tag != "rule":
        raise RuleError(f"root element must be <rule>, got <{root.tag}>")
    name = root.get("name")
    if not name:
        raise RuleError("<rule> needs a name attribute")
    try:
        cooldown = float(root.get("cooldown", str(DEFAULT_COOLDOWN)))
    except ValueError:
        raise RuleError("cooldown must be a number") from None
    enabled_attr = root.get("enabled", "true")
    if enabled_attr not in ("true", "false"):
        raise RuleError("enabled must be 'true' or 'false'")

    inputs = []
    seen_vars = set()
    for el in root.findall("input"):
        var = el.get("var")
        metric = el.get("metric")
        if not var or not metric:
            raise RuleError("<input> needs var and metric attributes")
        if var in seen_vars:
            raise RuleError(f"duplicate input variable {var!r}")
        seen_vars.add(var)
        node = el.get("node", "self")
        count_attr = el.get("count")
        predicate = None
        predicate_src = ""
        window = None
        if count_attr is not None:
            try:
                window = int(count_attr)
            except ValueError:
                raise RuleError("count window must be integer seconds") from None
            if window <= 0:
                raise RuleError("count window must be positive")
            predicate_src = el.get("predicate", "")
            if not predicate_src:
                raise RuleError("count inputs need a predicate attribute")
            try:
                predicate = exprlang.parse_expr(predicate_src)
            except exprlang.ExprSyntaxError as e:
                raise RuleError(f"bad predicate: {e}") from None
            if not exprlang.returns_boolean(predicate):
                raise RuleError("predicate must produce a boolean")
            if _variables(predicate) - {"value"}:
                raise RuleError("predicates may only reference 'value'")
        elif el.get("predicate") is not None:
            raise RuleError("predicate is only meaningful on count inputs")
        inputs.append(RuleInput(var, metric, node, window, predicate, predicate_src))
    if not inputs:
        raise RuleError("a rule needs at least one <input>")

    cond_el = root.find("condition")
    if cond_el is None or not (cond_el.text or "").strip():
        raise RuleError("a rule needs a nonempty <condition>")
    condition_src = cond_el.text.strip()
    try:
        condition = exprlang.parse_expr(condition_src)
    except exprlang.ExprSyntaxError as e:
        raise RuleError(f"bad condition: {e}") from None
    if not exprlang.returns_boolean(condition):
        raise RuleError("condition must produce a boolean at the root")
    unknown = _variables(condition) - seen_vars
    if unknown:
        raise RuleError(f"condition references undeclared variables: {sorted(unknown)}")

    act_el = root.find("actuator")
    if act_el is None or not act_el.get("cmd"):
        raise RuleError("a rule needs an <actuator cmd=...>")
    try:
        timeout = float(act_el.get("timeout", str(DEFAULT_ACTUATOR_TIMEOUT)))
    except ValueError:
        raise RuleError("actuator timeout must be a number") from None
    actuator = Actuator(act_el.get("cmd"), act_el.get("args", ""), timeout)

    return Rule(name=name, inputs=tuple(inputs), condition=condition,
                condition_src=condition_src, actuator=actuator,
                cooldown=cooldown, enabled=(enabled_attr == "true"))


def serialize_rule(rule: Rule) -> bytes:
    root = ET.Element("rule", {"name": rule.name, "cooldown": _fmt_num(rule.cooldown),
                               "enabled": "true" if rule.enabled else "false"})
    for inp in rule.inputs:
        attrs = {"var": inp.var, "metric": inp.metric, "node": inp.node}
        if inp.count_window is not None:
            attrs["count"] = str(inp.count_window)
            attrs["predicate"] = inp.predicate_src
        ET.SubElement(root, "input", attrs)
    cond = ET.SubElement(root, "condition")
    cond.text = rule.condition_src
    ET.SubElement(root, "actuator", {"cmd": rule.actuator.cmd, "args": rule.actuator.args,
                                     "timeout": _fmt_num(rule.actuator.timeout)})
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def _variables(expr: exprlang.Expr) -> set:
    out = set()

    def walk(e):
        if isinstance(e, exprlang.Var):
            out.add(e.name)
        elif isinstance(e, exprlang.Unary):
            walk(e.operand)
        elif isinstance(e, exprlang.Binary):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return out


def load_rules_dir(directory: str) -> tuple:
    """Parse every ``*.xml`` in the directory; returns (rules, errors) with
    unique names enforced."""
    import os

    rules: dict[str, Rule] = {}
    errors: list[str] = []
    if not os.path.isdir(directory):
        return [], []
    for fn in sorted(os.listdir(directory)):
        if not fn.endswith(".xml"):
            continue
        path = os.path.join(directory, fn)
        try:
            with open(path, "rb") as f:
                rule = parse_rule(f.read())
        except (OSError, RuleError) as e:
            errors.append(f"{fn}: {e}")
            continue
        if rule.name in rules:
            errors.append(f"{fn}: duplicate rule name {rule.name!r}")
            continue
        rules[rule.name] = rule
    return list(rules.values()), errors
