"""Configuration components: plug-ins that translate profile subtrees into
local service configuration, idempotently.

A component declares the profile prefixes it subscribes to and the
components that must run before it; ``configure`` receives a read-only
profile view plus helpers whose file writes are atomic (temp + rename) and
recorded only when content actually changes, which is what makes a second
run against an unchanged profile a strict no-op.
"""

from __future__ import annotations

import logging
import os
from typing import Optional

from .. import pan

log = logging.getLogger(__name__)


class ComponentError(Exception):
    pass


class ServiceManager:
    """Service-action target; the simulator provides a real registry, the
    standalone CLI records intents only."""

    def is_running(self, name: str) -> bool:
        return False

    def action(self, verb: str, name: str) -> None:
        raise NotImplementedError


class NullServiceManager(ServiceManager):
    def __init__(self):
        self.actions = []

    def action(self, verb: str, name: str) -> None:
        self.actions.append((verb, name))


class ComponentContext:
    def __init__(self, node: str, profile: pan.Interior, root: str,
                 services: Optional[ServiceManager] = None,
                 extras: Optional[dict] = None):
        self.node = node
        self.profile = profile
        self.root = root
        self.services = services or NullServiceManager()
        self.extras = dict(extras or {})
        self.changed_files: list = []
        self.service_actions: list = []

    def fresh(self) -> "ComponentContext":
        """Per-component recording section sharing the same profile view."""
        return ComponentContext(self.node, self.profile, self.root,
                                self.services, self.extras)

    # -- profile view ---------------------------------------------------------

    def subtree(self, path: str) -> Optional[pan.Interior]:
        node = pan.lookup(self.profile, pan.parse_path(path))
        return node if isinstance(node, pan.Interior) else None

    def get(self, path: str):
        node = pan.lookup(self.profile, pan.parse_path(path))
        if node is None or isinstance(node, pan.Interior):
            return None
        return node.value

    def require(self, path: str):
        node = pan.lookup(self.profile, pan.parse_path(path))
        if node is None or isinstance(node, pan.Interior):
            raise ComponentError(f"profile is missing {path}")
        return node.value

    # -- filesystem helpers -----------------------------------------------------

    def path(self, relpath: str) -> str:
        full = os.path.normpath(os.path.join(self.root, relpath))
        if not full.startswith(os.path.normpath(self.root) + os.sep):
            raise ComponentError(f"path {relpath!r} escapes the node root")
        return full

    def write_file(self, relpath: str, content) -> bool:
        """Atomic write-if-different; returns True when the file changed."""
        if isinstance(content, str):
            content = content.encode("utf-8")
        full = self.path(relpath)
        try:
            with open(full, "rb") as f:
                if f.read() == content:
                    return False
        except FileNotFoundError:
            pass
        os.makedirs(os.path.dirname(full), exist_ok=True)
        tmp = full + ".tmp"
        with open(tmp, "wb") as f:
            f.write(content)
        os.replace(tmp, full)
        self.changed_files.append(relpath)
        return True

    def remove_file(self, relpath: str) -> bool:
        try:
            os.unlink(self.path(relpath))
        except FileNotFoundError:
            return False
        self.changed_files.append(relpath)
        return True

    def service(self, verb: str, name: str) -> None:
        self.services.action(verb, name)
        self.service_actions.append((verb, name))


class Component:
    name: str = ""
    subscriptions: tuple = ()
    dependencies: tuple = ()

    def configure(self, ctx: ComponentContext) -> None:
        raise NotImplementedError


class ComponentRegistry:
    def __init__(self):
        self._components: dict[str, Component] = {}

    def add(self, component: Component) -> None:
        if component.name in self._components:
            raise ComponentError(f"duplicate component {component.name!r}")
        self._components[component.name] = component

    def get(self, name: str) -> Optional[Component]:
        return self._components.get(name)

    def names(self) -> list:
        return sorted(self._components)

    def components(self) -> list:
        return [self._components[n] for n in self.names()]


# ---------------------------------------------------------------------------
# Built-in components


class FilesComponent(Component):
    """Renders /files/<id> = { path, content } records into real files; stale
    files it used to manage are removed via its manifest."""

    name = "files"
    subscriptions = ("/files",)
    manifest_rel = ".ncm/files.manifest"

    def configure(self, ctx: ComponentContext) -> None:
        tree = ctx.subtree("/files")
        wanted = {}
        if tree is not None:
            for key in sorted(tree.children):
                entry = tree.children[key]
                if not isinstance(entry, pan.Interior):
                    raise ComponentError(f"/files/{key} must be a record")
                relpath = entry.children.get("path")
                content = entry.children.get("content")
                if not isinstance(relpath, pan.Leaf) or not isinstance(content, pan.Leaf):
                    raise ComponentError(f"/files/{key} needs path and content")
                wanted[relpath.value] = content.value
        previous = self._read_manifest(ctx)
        for rel in sorted(previous - set(wanted)):
            ctx.remove_file(rel)
        for rel in sorted(wanted):
            ctx.write_file(rel, wanted[rel])
        ctx.write_file(self.manifest_rel, "".join(f"{p}\n" for p in sorted(wanted)))

    def _read_manifest(self, ctx: ComponentContext) -> set:
        try:
            with open(ctx.path(self.manifest_rel), encoding="utf-8") as f:
                return {line.strip() for line in f if line.strip()}
        except FileNotFoundError:
            return set()


class FtRulesComponent(Component):
    """Materializes /ft/rules/<name> rule documents into the rule directory
    and pokes the local engine to reload."""

    name = "ftrules"
    subscriptions = ("/ft/rules",)
    rules_rel = "ft/rules"

    def configure(self, ctx: ComponentContext) -> None:
        tree = ctx.subtree("/ft/rules")
        wanted = {}
        if tree is not None:
            for key in sorted(tree.children):
                leaf = tree.children[key]
                if not isinstance(leaf, pan.Leaf) or leaf.tag != "string":
                    raise ComponentError(f"/ft/rules/{key} must be a rule document string")
                wanted[key] = leaf.value
        rules_dir = ctx.path(self.rules_rel)
        os.makedirs(rules_dir, exist_ok=True)
        changed = False
        for fn in sorted(os.listdir(rules_dir)):
            if fn.endswith(".xml") and fn[:-4] not in wanted:
                changed |= ctx.remove_file(f"{self.rules_rel}/{fn}")
        for key in sorted(wanted):
            changed |= ctx.write_file(f"{self.rules_rel}/{key}.xml", wanted[key])
        reload_rules = ctx.extras.get("reload_rules")
        if changed and reload_rules is not None:
            reload_rules()


class ServicesComponent(Component):
    """Converges /services/<name> = { state = running|stopped } against the
    live service registry; acting only on mismatches keeps reruns silent."""

    name = "services"
    subscriptions = ("/services",)
    dependencies = ("spm",)

    def configure(self, ctx: ComponentContext) -> None:
        tree = ctx.subtree("/services")
        if tree is None:
            return
        for name in sorted(tree.children):
            entry = tree.children[name]
            if not isinstance(entry, pan.Interior):
                raise ComponentError(f"/services/{name} must be a record")
            state = entry.children.get("state")
            desired = state.value if isinstance(state, pan.Leaf) else "running"
            if desired not in ("running", "stopped"):
                raise ComponentError(f"/services/{name}/state must be running|stopped")
            running = ctx.services.is_running(name)
            if desired == "running" and not running:
                ctx.service("start", name)
            elif desired == "stopped" and running:
                ctx.service("stop", name)


class SpmComponent(Component):
    """Renders /software/packages/<id> records into the agent's desired-state
    config file and launches the agent."""

    name = "spm"
    subscriptions = ("/software",)
    config_rel = "spma.conf"

    def configure(self, ctx: ComponentContext) -> None:
        from ..spm.spma import format_config_file
        from ..spm.swrep import PackageRef

        tree = ctx.subtree("/software/packages")
        refs = []
        if tree is not None:
            for key in sorted(tree.children):
                entry = tree.children[key]
                if not isinstance(entry, pan.Interior):
                    raise ComponentError(f"/software/packages/{key} must be a record")
                try:
                    refs.append(PackageRef(
                        entry.children["name"].value, entry.children["version"].value,
                        entry.children["arch"].value, entry.children["repo"].value,
                        entry.children["digest"].value if "digest" in entry.children else ""))
                except (KeyError, AttributeError):
                    raise ComponentError(
                        f"/software/packages/{key} needs name/version/arch/repo") from None
        ctx.write_file(self.config_rel, format_config_file(refs))
        spma_run = ctx.extras.get("spma_run")
        if spma_run is not None:
            report = spma_run(ctx.path(self.config_rel))
            if report is not None and not report.ok:
                raise ComponentError(f"package reconciliation failed: {report.message}")


class ExecComponent(Component):
    """Adapter for third-party executable components: the script receives the
    node root and its subtree as JSON on stdin and prints changed files one
    per line."""

    def __init__(self, name: str, command: str, subscriptions: tuple,
                 dependencies: tuple = (), timeout: float = 60.0):
        self.name = name
        self.command = command
        self.subscriptions = tuple(subscriptions)
        self.dependencies = tuple(dependencies)
        self.timeout = timeout

    def configure(self, ctx: ComponentContext) -> None:
        import json
        import subprocess

        payload = {"node": ctx.node, "root": ctx.root,
                   "subtrees": {p: _tree_to_obj(ctx.subtree(p)) for p in self.subscriptions}}
        try:
            proc = subprocess.run([self.command, ctx.root], input=json.dumps(payload),
                                  capture_output=True, text=True, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise ComponentError(str(e)) from None
        if proc.returncode != 0:
            raise ComponentError(f"exited {proc.returncode}: {proc.stderr.strip()[:200]}")
        for line in proc.stdout.splitlines():
            line = line.strip()
            if line:
                ctx.changed_files.append(line)


def _tree_to_obj(node):
    if node is None:
        return None
    if isinstance(node, pan.Leaf):
        return node.value
    return {k: _tree_to_obj(v) for k, v in sorted(node.children.items())}


def builtin_registry() -> ComponentRegistry:
    reg = ComponentRegistry()
    reg.add(FilesComponent())
    reg.add(FtRulesComponent())
    reg.add(SpmComponent())
    reg.add(ServicesComponent())
    return reg
