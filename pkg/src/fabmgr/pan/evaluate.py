"""Include resolution, statement evaluation, type checking and validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .. import exprlang
from .errors import IncludeCycleError, MissingTemplateError, PathConflictError
from .syntax import (Assign, BaseType, Delete, Include, ListLit, ListType, Literal,
                     ScalarLit, Statement, Template, TypeBind, TypeExpr, ValidBind,
                     format_path)
from .tree import Interior, Leaf, lookup


def resolve_includes(root: Template, store) -> list:
    """Depth-first textual expansion of the include hierarchy.

    Each include edge is expanded at each textual occurrence (no include
    guards), so diamond inclusion duplicates statements deliberately.
    """
    out: list[Statement] = []
    active: list[str] = []

    def expand(tpl: Template) -> None:
        active.append(tpl.name)
        for st in tpl.statements:
            if isinstance(st, Include):
                if st.name in active:
                    raise IncludeCycleError(active[active.index(st.name):] + [st.name])
                sub = store.get(st.name)
                if sub is None:
                    raise MissingTemplateError(st.name, st.loc.template, st.loc.line)
                expand(sub)
            else:
                out.append(st)
        active.pop()

    expand(root)
    return out


def _literal_node(lit: Literal, origin):
    if isinstance(lit, ScalarLit):
        return Leaf(lit.tag, lit.value, origin)
    node = Interior(origin=origin)
    if isinstance(lit, ListLit):
        for idx, item in enumerate(lit.items):
            node.children[str(idx)] = _literal_node(item, origin)
    else:
        for name, sub in lit.fields:
            node.children[name] = _literal_node(sub, origin)
    return node


def evaluate(stream: Iterable[Statement]) -> Interior:
    """Apply an include-resolved statement stream to an empty tree.

    Later assignment to the same path overrides earlier ones; delete removes
    the subtree at its path (missing paths are a no-op); a conflict between a
    leaf and an interior node reports both statement locations.
    """
    root = Interior()
    for st in stream:
        if isinstance(st, Assign):
            _apply_assign(root, st)
        elif isinstance(st, Delete):
            _apply_delete(root, st.path)
        # type / valid bindings do not touch the tree
    return root


def _apply_assign(root: Interior, st: Assign) -> None:
    node = root
    for depth, comp in enumerate(st.path[:-1]):
        child = node.children.get(comp)
        if child is None:
            child = Interior(origin=st.loc)
            node.children[comp] = child
        elif isinstance(child, Leaf):
            raise PathConflictError(format_path(st.path[:depth + 1]),
                                    str(child.origin), str(st.loc))
        node = child
    last = st.path[-1]
    existing = node.children.get(last)
    replacement = _literal_node(st.literal, st.loc)
    if existing is not None and type(existing) is not type(replacement):
        raise PathConflictError(format_path(st.path), str(existing.origin), str(st.loc))
    node.children[last] = replacement


def _apply_delete(root: Interior, path: tuple) -> None:
    node = root
    for comp in path[:-1]:
        child = node.children.get(comp)
        if not isinstance(child, Interior):
            return
        node = child
    node.children.pop(path[-1], None)


def collect_bindings(stream: Iterable[Statement]) -> tuple:
    """Split a resolved stream into (type bindings, validator bindings)."""
    types = [st for st in stream if isinstance(st, TypeBind)]
    validators = [st for st in stream if isinstance(st, ValidBind)]
    return types, validators


@dataclass(frozen=True)
class TypeViolation:
    path: str
    expected: str
    actual: str
    loc: str

    def __str__(self):
        return f"{self.path}: expected {self.expected}, got {self.actual} (type bound at {self.loc})"


def check_types(root: Interior, bindings: Iterable[TypeBind]) -> list:
    """Check every bound path against its type; returns violations, never
    mutates the tree.  Unbound paths are unchecked."""
    violations: list[TypeViolation] = []
    for b in bindings:
        node = lookup(root, b.path)
        if node is None:
            violations.append(TypeViolation(format_path(b.path), str(b.texpr), "missing", str(b.loc)))
            continue
        violations.extend(
            TypeViolation(path, expected, actual, str(b.loc))
            for path, expected, actual in _conformance_errors(node, b.texpr, b.path))
    return violations


def _describe(node) -> str:
    if isinstance(node, Leaf):
        return f"{node.tag} value"
    return "interior node"


def _conformance_errors(node, texpr: TypeExpr, path: tuple):
    if isinstance(texpr, BaseType):
        if not isinstance(node, Leaf) or node.tag != texpr.name:
            yield format_path(path), texpr.name, _describe(node)
        return
    if isinstance(texpr, ListType):
        if not isinstance(node, Interior):
            yield format_path(path), str(texpr), _describe(node)
            return
        keys = set(node.children)
        expected = {str(i) for i in range(len(keys))}
        if keys != expected:
            yield format_path(path), str(texpr), f"keys {sorted(keys)} are not a 0..n-1 index range"
            return
        for i in range(len(keys)):
            yield from _conformance_errors(node.children[str(i)], texpr.element, path + (str(i),))
        return
    # record
    if not isinstance(node, Interior):
        yield format_path(path), "record", _describe(node)
        return
    declared = {name: (sub, required) for name, sub, required in texpr.fields}
    for key in sorted(node.children):
        if key not in declared:
            yield format_path(path + (key,)), "no such record field", _describe(node.children[key])
    for name, (sub, required) in declared.items():
        child = node.children.get(name)
        if child is None:
            if required:
                yield format_path(path + (name,)), str(sub), "missing"
            continue
        yield from _conformance_errors(child, sub, path + (name,))


@dataclass(frozen=True)
class ValidationFailure:
    path: str
    loc: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message} (validator at {self.loc})"


def run_validation(root: Interior, validators: Iterable[ValidBind]) -> list:
    """Run every validator; a runtime error is reported as a failure and does
    not abort the remaining validators."""
    failures: list[ValidationFailure] = []

    def lookup_path(text: str):
        node = lookup(root, tuple(text[1:].split("/")))
        if node is None:
            raise exprlang.EvalError(f"path {text} is not present")
        if isinstance(node, Interior):
            raise exprlang.EvalError(f"path {text} is not a leaf")
        return node.value

    for v in validators:
        target = lookup(root, v.path)
        path_str = format_path(v.path)
        if target is None:
            failures.append(ValidationFailure(path_str, str(v.loc), "validated path is not present"))
            continue
        if isinstance(target, Interior):
            failures.append(ValidationFailure(path_str, str(v.loc), "validated path is not a leaf"))
            continue
        env = {"value": target.value}
        try:
            ok = exprlang.evaluate_bool(v.expr, env, lookup_path)
        except exprlang.EvalError as e:
            failures.append(ValidationFailure(path_str, str(v.loc), f"validator error: {e}"))
            continue
        if not ok:
            failures.append(ValidationFailure(path_str, str(v.loc),
                                              f"validation failed: {v.source}"))
    return failures
