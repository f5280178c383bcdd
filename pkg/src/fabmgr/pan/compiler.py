"""Template store and the full compile pipeline."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from .errors import PanError
from .evaluate import check_types, collect_bindings, evaluate, resolve_includes, run_validation
from .syntax import Include, Template, parse_template
from .tree import Interior, profile_hash, serialize_profile

TEMPLATE_SUFFIX = ".tpl"


class CompileFailure(PanError):
    """Aggregate of type violations / validation failures for one node."""

    def __init__(self, node: str, problems: list):
        super().__init__(f"profile {node!r} failed checks:\n  " +
                         "\n  ".join(str(p) for p in problems))
        self.node = node
        self.problems = problems


class TemplateStore:
    """Named template sources; parsing is cached per source text."""

    def __init__(self, sources: Optional[dict] = None):
        self._sources: dict[str, str] = dict(sources or {})
        self._parsed: dict[str, Template] = {}

    @classmethod
    def from_dir(cls, directory: str) -> "TemplateStore":
        sources = {}
        for fn in sorted(os.listdir(directory)):
            if fn.endswith(TEMPLATE_SUFFIX):
                name = fn[: -len(TEMPLATE_SUFFIX)]
                with open(os.path.join(directory, fn), encoding="utf-8") as f:
                    sources[name] = f.read()
        return cls(sources)

    def names(self) -> list:
        return sorted(self._sources)

    def sources(self) -> dict:
        return dict(self._sources)

    def source(self, name: str) -> Optional[str]:
        return self._sources.get(name)

    def put(self, name: str, source: str) -> None:
        self._sources[name] = source
        self._parsed.pop(name, None)

    def remove(self, name: str) -> None:
        self._sources.pop(name, None)
        self._parsed.pop(name, None)

    def get(self, name: str) -> Optional[Template]:
        if name not in self._sources:
            return None
        tpl = self._parsed.get(name)
        if tpl is None:
            tpl = parse_template(self._sources[name], name)
            self._parsed[name] = tpl
        return tpl

    def object_templates(self) -> list:
        return [n for n in self.names() if self.get(n).is_object]

    def include_graph(self) -> dict:
        """name -> list of directly included template names (parse errors in
        a template contribute no edges)."""
        graph = {}
        for name in self.names():
            try:
                tpl = self.get(name)
            except PanError:
                graph[name] = []
                continue
            graph[name] = [st.name for st in tpl.statements if isinstance(st, Include)]
        return graph

    def snapshot(self) -> "TemplateStore":
        return TemplateStore(self._sources)


@dataclass(frozen=True)
class CompiledProfile:
    node: str
    document: bytes
    hash: str
    tree: Interior


def compile_stream(node: str, stream: list) -> CompiledProfile:
    tree = evaluate(stream)
    type_binds, validators = collect_bindings(stream)
    problems = check_types(tree, type_binds)
    if problems:
        raise CompileFailure(node, problems)
    failures = run_validation(tree, validators)
    if failures:
        raise CompileFailure(node, failures)
    document = serialize_profile(node, tree)
    return CompiledProfile(node, document, profile_hash(document), tree)


def compile_profile(node: str, store: TemplateStore) -> CompiledProfile:
    """parse -> resolve -> evaluate -> check -> validate -> canonical bytes.

    Pure in (node, store): compiling twice yields byte-identical documents.
    Any error aborts compilation; no partial profile is produced.
    """
    tpl = store.get(node)
    if tpl is None:
        raise PanError(f"no template named {node!r} in the store")
    if not tpl.is_object:
        raise PanError(f"template {node!r} is not an object template")
    stream = resolve_includes(tpl, store)
    return compile_stream(node, stream)
