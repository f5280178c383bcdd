"""Default template corpus for simulated fabrics.

Each node's profile carries everything its daemons need: services to keep
running, desired packages, monitored-metric knobs, installation fields, and
the per-node repair rules (rules reference global RMS metrics by node name,
which is why they are rendered per node and deployed through the profile)."""

from __future__ import annotations

from ..pan import TemplateStore

WATCHED_SERVICE = "httpd"


def pan_string(text: str) -> str:
    """Escape arbitrary text as a Pan string literal."""
    out = (text.replace("\\", "\\\\").replace('"', '\\"')
               .replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r"))
    return f'"{out}"'


def node_rules(node: str, service: str = WATCHED_SERVICE,
               with_escalation: bool = False, failing_repair: bool = False) -> dict:
    """The control-loop rule set: drain on exception, repair once the node is
    out of production, reinstate on recovery."""
    state_metric = f"rms.state.{node}"
    repair_cmd = "sim:fail" if failing_repair else "sim:ncd-run"
    repair_args = "" if failing_repair else "services"
    rules = {
        "node-out": (
            f'<rule name="node-out" cooldown="30">'
            f'<input var="alive" metric="daemon.alive" node="self"/>'
            f'<input var="state" metric="{state_metric}" node="{node}"/>'
            f'<condition>alive == 0 &amp;&amp; state == "in-production"</condition>'
            f'<actuator cmd="sim:rms-remove" args="drain"/>'
            f'</rule>'),
        "repair": (
            f'<rule name="repair" cooldown="30">'
            f'<input var="alive" metric="daemon.alive" node="self"/>'
            f'<input var="state" metric="{state_metric}" node="{node}"/>'
            f'<condition>alive == 0 &amp;&amp; state == "out-of-production"</condition>'
            f'<actuator cmd="{repair_cmd}" args="{repair_args}"/>'
            f'</rule>'),
        "node-back": (
            f'<rule name="node-back" cooldown="30">'
            f'<input var="alive" metric="daemon.alive" node="self"/>'
            f'<input var="state" metric="{state_metric}" node="{node}"/>'
            f'<condition>alive == 1 &amp;&amp; state == "out-of-production"</condition>'
            f'<actuator cmd="sim:rms-reinstate" args=""/>'
            f'</rule>'),
        "pkg-repair": (
            f'<rule name="pkg-repair" cooldown="30">'
            f'<input var="consistent" metric="pkg.consistent" node="self"/>'
            f'<condition>consistent == 0</condition>'
            f'<actuator cmd="sim:spma-run" args=""/>'
            f'</rule>'),
    }
    if with_escalation:
        rules["escalate-repair"] = (
            f'<rule name="escalate-repair" cooldown="600">'
            f'<input var="nfail" metric="ft.actuator.repair.status" node="self" '
            f'count="300" predicate="value != 0"/>'
            f'<condition>nfail &gt;= 3</condition>'
            f'<actuator cmd="builtin:report-escalation" args="repair keeps failing"/>'
            f'</rule>')
    return rules


def fabric_store(nodes: list, repo_url: str = "sim://swrep",
                 packages=None, with_escalation: bool = False,
                 failing_repair: bool = False) -> TemplateStore:
    packages = packages if packages is not None else [("base-tool", "1.0", "noarch", "")]
    sources = {
        "site-base": (
            'template site-base;\n'
            '"/site/name" = "fabsim";\n'
            '"/files/motd" = { path = "etc/motd", content = "fabric-managed node\\n" };\n'
        ),
        "schema": (
            'template schema;\n'
            'type "/cpu/count" = long;\n'
            'valid "/cpu/count" = { value >= 1 && value <= 1024 };\n'
            'type "/network/ip" = string;\n'
        ),
    }
    for i, node in enumerate(nodes):
        pkg_lines = []
        for j, pkg in enumerate(packages):
            name, version, arch = pkg[:3]
            digest = pkg[3] if len(pkg) > 3 else ""
            digest_field = f', digest = "{digest}"' if digest else ""
            pkg_lines.append(
                f'"/software/packages/p{j}" = {{ name = "{name}", version = "{version}", '
                f'arch = "{arch}", repo = "{repo_url}"{digest_field} }};')
        rule_lines = [
            f'"/ft/rules/{rname}" = {pan_string(xml)};'
            for rname, xml in sorted(node_rules(node, with_escalation=with_escalation,
                                                failing_repair=failing_repair).items())]
        sources[node] = "\n".join([
            f"object template {node};",
            "include site-base;",
            "include schema;",
            f'"/cpu/count" = {2 + i % 6};',
            f'"/network/ip" = "10.1.{i // 250}.{i % 250 + 1}";',
            f'"/network/hostname" = "{node}";',
            f'"/hardware/mac" = "02:00:00:00:{i // 256:02x}:{i % 256:02x}";',
            f'"/services/{WATCHED_SERVICE}" = {{ state = "running" }};',
            '"/aii/partitions/p1" = { device = "sda", mount = "/", size_mb = 8192 };',
            '"/aii/packages/base" = "base-os-1.0.x86_64";',
            *pkg_lines,
            *rule_lines,
        ]) + "\n"
    return TemplateStore(sources)


def node_names(n: int) -> list:
    return [f"node{i:03d}" for i in range(n)]
