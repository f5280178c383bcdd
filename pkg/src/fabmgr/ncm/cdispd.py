"""Configuration dispatch: watches the cached profile, maps changed paths to
subscribed components, and invokes the deployer (with a debounce window for
bursts and a slow anti-drift sweep that reruns everything)."""

from __future__ import annotations

import logging
import time as _time
from typing import Callable, Optional

from .. import pan
from .components import ComponentRegistry
from .ncd import NcdBusy

log = logging.getLogger(__name__)

DEFAULT_DEBOUNCE = 5.0
DEFAULT_RECONCILE = 300.0


def tree_leaf_map(tree: pan.Interior) -> dict:
    """path -> (tag, value); empty interior nodes appear with a marker so
    their (dis)appearance is visible to diffs."""
    out = {}
    for path, node in pan.iter_leaves(tree):
        if isinstance(node, pan.Leaf):
            out[path] = (node.tag, node.value)
        else:
            out[path] = ("<empty>", None)
    return out


def tree_diff_paths(old: pan.Interior, new: pan.Interior) -> set:
    a, b = tree_leaf_map(old), tree_leaf_map(new)
    return {p for p in set(a) | set(b) if a.get(p) != b.get(p)}


def affected_components(registry: ComponentRegistry, changed_paths) -> set:
    """A component is affected iff some changed path has one of its
    subscribed prefixes as ancestor-or-self."""
    out = set()
    for comp in registry.components():
        prefixes = [pan.parse_path(p) for p in comp.subscriptions]
        for path in changed_paths:
            if any(path[:len(p)] == p for p in prefixes):
                out.add(comp.name)
                break
    return out


def cdispd_scan(registry: ComponentRegistry, old: pan.Interior,
                new: pan.Interior) -> set:
    return affected_components(registry, tree_diff_paths(old, new))


class Cdispd:
    """Drive with periodic ``tick()`` calls (thread timer or simulator
    event); returns the deployer report whenever a run happened."""

    def __init__(self, ccm, registry: ComponentRegistry,
                 run: Callable,  # run(component name set, profile tree) -> RunReport
                 clock: Callable[[], float] = _time.time,
                 debounce: float = DEFAULT_DEBOUNCE,
                 reconcile_every: float = DEFAULT_RECONCILE):
        self.ccm = ccm
        self.registry = registry
        self.run = run
        self.clock = clock
        self.debounce = debounce
        self.reconcile_every = reconcile_every
        self._applied: Optional[pan.Interior] = None
        self._pending: set = set()
        self._deadline: Optional[float] = None
        self._next_reconcile = self.clock() + reconcile_every

    def tick(self):
        now = self.clock()
        entry = self.ccm.current()
        if entry is None:
            return None
        tree = entry.tree

        if self._applied is None:
            self._pending = set(self.registry.names())
            self._deadline = now
        else:
            changed = tree_diff_paths(self._applied, tree)
            if changed:
                affected = affected_components(self.registry, changed)
                if affected - self._pending:
                    self._pending |= affected
                if self._deadline is None:
                    self._deadline = now + self.debounce

        if now >= self._next_reconcile:
            self._pending = set(self.registry.names())
            self._deadline = now
            self._next_reconcile = now + self.reconcile_every

        if not self._pending or self._deadline is None or now < self._deadline:
            return None
        try:
            report = self.run(set(self._pending), tree)
        except NcdBusy:
            return None  # keep pending; retried next tick
        self._applied = tree
        self._pending.clear()
        self._deadline = None
        return report
