"""Configuration-compiler tests: parser, includes, evaluation (with a naive
replay oracle), type checking, validation and full-profile determinism."""

import random

import pytest

from fabmgr.pan import (Assign, CompileFailure, Include, IncludeCycleError,
                        Interior, Leaf, ListLit, MissingTemplateError,
                        PanSyntaxError, PathConflictError, RecordLit, ScalarLit,
                        Template, TemplateStore, check_types, collect_bindings,
                        compile_profile, evaluate, parse_profile, parse_template,
                        resolve_includes, run_validation, serialize_profile)
from fabmgr.pan.syntax import Location

from corpusgen import build_corpus


# ---------------------------------------------------------------------------
# parse_template


def test_parse_single_assignment():
    t = parse_template('"/cpu/count" = 4;', "t")
    assert len(t.statements) == 1
    st = t.statements[0]
    assert isinstance(st, Assign)
    assert st.path == ("cpu", "count")
    assert st.literal == ScalarLit("long", 4)


def test_parse_empty_source():
    t = parse_template("", "t")
    assert t.statements == []
    assert t.kind == "ordinary"


def test_parse_missing_literal_reports_position():
    with pytest.raises(PanSyntaxError) as e:
        parse_template('"/a" = ;', "t")
    assert e.value.line == 1
    assert e.value.col == 8


def test_parse_header_kinds():
    assert parse_template("object template n1;", "n1").kind == "object"
    assert parse_template("template lib;", "lib").kind == "ordinary"
    with pytest.raises(PanSyntaxError):
        parse_template("object template other;", "n1")


def test_parse_literals():
    t = parse_template(
        '"/a" = true;\n"/b" = -12;\n"/c" = 2.5e3;\n"/d" = "x\\ny";\n'
        '"/e" = [ 1, 2 ];\n"/f" = { k = 1, s = "v" };\n', "t")
    lits = [st.literal for st in t.statements]
    assert lits[0] == ScalarLit("boolean", True)
    assert lits[1] == ScalarLit("long", -12)
    assert lits[2] == ScalarLit("double", 2500.0)
    assert lits[3] == ScalarLit("string", "x\ny")
    assert lits[4] == ListLit((ScalarLit("long", 1), ScalarLit("long", 2)))
    assert lits[5] == RecordLit((("k", ScalarLit("long", 1)), ("s", ScalarLit("string", "v"))))


def test_parse_long_range():
    parse_template(f'"/a" = {2**63 - 1};', "t")
    parse_template(f'"/a" = -{2**63};', "t")
    with pytest.raises(PanSyntaxError):
        parse_template(f'"/a" = {2**63};', "t")


def test_parse_comments_and_invalid_path():
    t = parse_template("# a comment\n" '"/x" = 1; # trailing\n', "t")
    assert len(t.statements) == 1
    with pytest.raises(PanSyntaxError):
        parse_template('"x/y" = 1;', "t")
    with pytest.raises(PanSyntaxError):
        parse_template('"/x//y" = 1;', "t")


# ---------------------------------------------------------------------------
# resolve_includes


def _store(**sources):
    return TemplateStore(sources)


def test_include_textual_order():
    store = _store(A='include B;\n"/x" = 2;', B='"/x" = 1;')
    stream = resolve_includes(store.get("A"), store)
    assert [st.literal.value for st in stream] == [1, 2]


def test_include_self_cycle():
    store = _store(A="include A;")
    with pytest.raises(IncludeCycleError) as e:
        resolve_includes(store.get("A"), store)
    assert e.value.chain == ["A", "A"]


def test_include_missing():
    store = _store(A="include B;")
    with pytest.raises(MissingTemplateError):
        resolve_includes(store.get("A"), store)


def test_include_bc_order():
    store = _store(A="include B;\ninclude C;", B='"/b" = 1;', C='"/c" = 2;')
    stream = resolve_includes(store.get("A"), store)
    assert [st.path for st in stream] == [("b",), ("c",)]


def test_include_diamond_expands_twice():
    store = _store(A="include B;\ninclude C;", B="include D;", C="include D;", D='"/d" = 1;')
    stream = resolve_includes(store.get("A"), store)
    assert len(stream) == 2


def naive_expand(name, store):
    out = []
    for st in store.get(name).statements:
        if isinstance(st, Include):
            out.extend(naive_expand(st.name, store))
        else:
            out.append(st)
    return out


def test_include_random_dags_match_naive_expander():
    rng = random.Random(42)
    for _ in range(50):
        n = rng.randrange(2, 10)
        sources = {}
        for i in range(n):
            lines = []
            for j in range(i + 1, n):
                if rng.random() < 0.4:
                    lines.append(f"include t{j};")
            lines.append(f'"/v/t{i}" = {i};')
            rng.shuffle(lines)
            sources[f"t{i}"] = "\n".join(lines)
        store = TemplateStore(sources)
        got = resolve_includes(store.get("t0"), store)
        assert got == naive_expand("t0", store)


# ---------------------------------------------------------------------------
# evaluate + naive replay oracle


def _stmts(source):
    return parse_template(source, "t").statements


def test_evaluate_last_writer_wins():
    tree = evaluate(_stmts('"/x" = 1;\n"/x" = 2;'))
    assert tree.children["x"] == Leaf("long", 2)


def test_evaluate_delete_subtree():
    tree = evaluate(_stmts('"/a/b" = 1;\ndelete "/a";'))
    assert tree == Interior()


def test_evaluate_delete_then_assign_recreates():
    tree = evaluate(_stmts('"/a/b" = 1;\ndelete "/a";\n"/a/c" = 2;'))
    assert tree.children["a"].children == {"c": Leaf("long", 2)}


def test_evaluate_conflict_scalar_over_interior():
    with pytest.raises(PathConflictError) as e:
        evaluate(_stmts('"/a/b" = 1;\n"/a" = 5;'))
    assert "t:1:1" in str(e.value) and "t:2:1" in str(e.value)


def test_evaluate_conflict_assign_below_leaf():
    with pytest.raises(PathConflictError):
        evaluate(_stmts('"/a" = 5;\n"/a/b" = 1;'))


def test_evaluate_compound_replaces_subtree():
    tree = evaluate(_stmts('"/a/b" = 1;\n"/a" = { c = 2 };'))
    assert tree.children["a"].children == {"c": Leaf("long", 2)}


# Naive flat-map interpreter: leaves as path->value dict plus a set of known
# empty interior paths, rebuilt into a tree only for the final comparison.

class NaiveState:
    def __init__(self):
        self.leaves = {}
        self.empties = set()

    def interior_paths(self):
        out = set()
        for p in list(self.leaves) + list(self.empties):
            for i in range(1, len(p)):
                out.add(p[:i])
        out |= self.empties
        return out

    def assign(self, path, lit):
        for i in range(1, len(path)):
            if path[:i] in self.leaves:
                raise PathConflictError("x", "a", "b")
        exists_leaf = path in self.leaves
        exists_interior = path in self.interior_paths()
        compound = not isinstance(lit, ScalarLit)
        if exists_leaf and compound:
            raise PathConflictError("x", "a", "b")
        if exists_interior and not compound:
            raise PathConflictError("x", "a", "b")
        self._remove_under(path)
        self._insert(path, lit)

    def _insert(self, path, lit):
        if isinstance(lit, ScalarLit):
            self.leaves[path] = (lit.tag, lit.value)
        elif isinstance(lit, ListLit):
            if not lit.items:
                self.empties.add(path)
            for i, item in enumerate(lit.items):
                self._insert(path + (str(i),), item)
        else:
            if not lit.fields:
                self.empties.add(path)
            for k, sub in lit.fields:
                self._insert(path + (k,), sub)

    def _remove_under(self, path):
        removed = False
        for p in [p for p in self.leaves if p[:len(path)] == path]:
            del self.leaves[p]
            removed = True
        for p in [p for p in self.empties if p[:len(path)] == path]:
            self.empties.discard(p)
            removed = True
        return removed

    def delete(self, path):
        if self._remove_under(path) and len(path) > 1:
            self.empties.add(path[:-1])

    def to_tree(self):
        root = Interior()
        interiors = {(): root}

        def ensure(p):
            if p in interiors:
                return interiors[p]
            parent = ensure(p[:-1])
            node = Interior()
            parent.children[p[-1]] = node
            interiors[p] = node
            return node

        for p in sorted(self.empties):
            ensure(p)
        for p in sorted(self.leaves):
            tag, value = self.leaves[p]
            ensure(p[:-1]).children[p[-1]] = Leaf(tag, value)
        return root


def gen_literal(rng, depth=2):
    c = rng.randrange(6 if depth > 0 else 4)
    if c == 0:
        return ScalarLit("long", rng.randrange(-5, 100))
    if c == 1:
        return ScalarLit("boolean", rng.random() < 0.5)
    if c == 2:
        return ScalarLit("double", rng.choice([0.5, 1.25, -2.75]))
    if c == 3:
        return ScalarLit("string", rng.choice(["a", "b", "", "hello world"]))
    if c == 4:
        return ListLit(tuple(gen_literal(rng, depth - 1) for _ in range(rng.randrange(3))))
    return RecordLit(tuple((f"k{i}", gen_literal(rng, depth - 1))
                           for i in range(rng.randrange(3))))


def gen_path(rng):
    return tuple(rng.choice("abcd") for _ in range(rng.randrange(1, 4)))


def test_evaluate_random_streams_match_naive_replay():
    rng = random.Random(9)
    mismatches = 0
    for _ in range(60):
        loc = Location("t", 1, 1)
        stmts = []
        for _ in range(200):
            if rng.random() < 0.2:
                stmts.append(type("D", (), {})())  # placeholder replaced below
                stmts[-1] = ("delete", gen_path(rng))
            else:
                stmts[-1:] = []
                stmts.append(("assign", gen_path(rng), gen_literal(rng)))
        from fabmgr.pan.syntax import Assign as A, Delete as D
        stream = [A(s[1], s[2], loc) if s[0] == "assign" else D(s[1], loc) for s in stmts]

        naive = NaiveState()
        naive_err = None
        try:
            for s in stream:
                if isinstance(s, A):
                    naive.assign(s.path, s.literal)
                else:
                    naive.delete(s.path)
        except PathConflictError:
            naive_err = "conflict"

        try:
            tree = evaluate(stream)
            real = ("ok", tree)
        except PathConflictError:
            real = ("conflict",)

        if naive_err:
            if real != ("conflict",):
                mismatches += 1
        else:
            if real[0] != "ok" or real[1] != naive.to_tree():
                mismatches += 1
    assert mismatches == 0


# ---------------------------------------------------------------------------
# check_types


def _binds(source):
    stmts = parse_template(source, "t").statements
    return collect_bindings(stmts)


def test_types_wrong_base():
    types, _ = _binds('type "/x" = long;')
    tree = evaluate(_stmts('"/x" = "abc";'))
    violations = check_types(tree, types)
    assert len(violations) == 1
    assert violations[0].path == "/x"
    assert violations[0].expected == "long"


def test_types_empty_bindings_vacuous():
    tree = evaluate(_stmts('"/x" = "anything";'))
    assert check_types(tree, []) == []


def test_types_record_ok():
    types, _ = _binds('type "/r" = record { count : long, name : string };')
    tree = evaluate(_stmts('"/r" = { count = 2, name = "n" };'))
    assert check_types(tree, types) == []


def test_types_record_missing_required_extra_and_optional():
    types, _ = _binds('type "/r" = record { count : long, name ? : string };')
    assert check_types(evaluate(_stmts('"/r" = { count = 2 };')), types) == []
    v = check_types(evaluate(_stmts('"/r" = { count = 2, bogus = 1 };')), types)
    assert [x.path for x in v] == ["/r/bogus"]
    v = check_types(evaluate(_stmts('"/r" = { name = "n" };')), types)
    assert [x.path for x in v] == ["/r/count"]


def test_types_list():
    types, _ = _binds('type "/l" = list(long);')
    assert check_types(evaluate(_stmts('"/l" = [ 1, 2, 3 ];')), types) == []
    assert check_types(evaluate(_stmts('"/l" = [ ];')), types) == []
    v = check_types(evaluate(_stmts('"/l" = [ 1, "x" ];')), types)
    assert [x.path for x in v] == ["/l/1"]


def test_types_missing_bound_path():
    types, _ = _binds('type "/absent" = long;')
    v = check_types(Interior(), types)
    assert [x.actual for x in v] == ["missing"]


def gen_type(rng, depth):
    from fabmgr.pan import BaseType, ListType, RecordType
    if depth <= 0 or rng.random() < 0.4:
        return BaseType(rng.choice(["boolean", "string", "long", "double"]))
    if rng.random() < 0.5:
        return ListType(gen_type(rng, depth - 1))
    return RecordType(tuple((f"f{i}", gen_type(rng, depth - 1), rng.random() < 0.7)
                            for i in range(rng.randrange(1, 4))))


def build_conforming(rng, texpr):
    from fabmgr.pan import BaseType, ListType
    if isinstance(texpr, BaseType):
        v = {"boolean": True, "string": "s", "long": 7, "double": 1.5}[texpr.name]
        return Leaf(texpr.name, v)
    if isinstance(texpr, ListType):
        node = Interior()
        for i in range(rng.randrange(3)):
            node.children[str(i)] = build_conforming(rng, texpr.element)
        return node
    node = Interior()
    for name, sub, required in texpr.fields:
        if required or rng.random() < 0.5:
            node.children[name] = build_conforming(rng, sub)
    return node


def oracle_conforms(node, texpr):
    from fabmgr.pan import BaseType, ListType
    if isinstance(texpr, BaseType):
        return isinstance(node, Leaf) and node.tag == texpr.name
    if isinstance(texpr, ListType):
        if not isinstance(node, Interior):
            return False
        if sorted(node.children) != sorted(str(i) for i in range(len(node.children))):
            return False
        return all(oracle_conforms(c, texpr.element) for c in node.children.values())
    if not isinstance(node, Interior):
        return False
    names = {n for n, _, _ in texpr.fields}
    if any(k not in names for k in node.children):
        return False
    for name, sub, required in texpr.fields:
        if name in node.children:
            if not oracle_conforms(node.children[name], sub):
                return False
        elif required:
            return False
    return True


def mutate(rng, node):
    if isinstance(node, Leaf):
        return Leaf("string" if node.tag != "string" else "long",
                    "oops" if node.tag != "string" else 1)
    if node.children and rng.random() < 0.7:
        k = rng.choice(sorted(node.children))
        node.children[k] = mutate(rng, node.children[k])
        return node
    node.children["zzz-extra"] = Leaf("long", 1)
    return node


def test_types_random_trees_match_structural_oracle():
    from fabmgr.pan import TypeBind
    rng = random.Random(31)
    loc = Location("t", 1, 1)
    for _ in range(300):
        texpr = gen_type(rng, 3)
        node = build_conforming(rng, texpr)
        if rng.random() < 0.5:
            node = mutate(rng, node)
        root = Interior({"x": node})
        violations = check_types(root, [TypeBind(("x",), texpr, loc)])
        assert (violations == []) == oracle_conforms(node, texpr)


# ---------------------------------------------------------------------------
# run_validation


def test_validation_pass_and_fail():
    src = '"/cpu/count" = 4;\nvalid "/cpu/count" = { value >= 0 };'
    stmts = _stmts(src)
    _, validators = collect_bindings(stmts)
    assert run_validation(evaluate(stmts), validators) == []

    stmts = _stmts('"/cpu/count" = -1;\nvalid "/cpu/count" = { value >= 0 };')
    _, validators = collect_bindings(stmts)
    failures = run_validation(evaluate(stmts), validators)
    assert [f.path for f in failures] == ["/cpu/count"]


def test_validation_missing_sibling_is_runtime_error_and_continues():
    src = ('"/cpu/count" = 4;\n'
           'valid "/cpu/count" = { value <= /mem/total };\n'
           'valid "/cpu/count" = { value >= 0 };')
    stmts = _stmts(src)
    _, validators = collect_bindings(stmts)
    failures = run_validation(evaluate(stmts), validators)
    assert len(failures) == 1
    assert "validator error" in failures[0].message


def test_validation_sibling_reference():
    src = ('"/cpu/count" = 4;\n"/mem/total" = 2048;\n'
           'valid "/cpu/count" = { value * 64 <= /mem/total };')
    stmts = _stmts(src)
    _, validators = collect_bindings(stmts)
    assert run_validation(evaluate(stmts), validators) == []


# ---------------------------------------------------------------------------
# compile_profile


def test_compile_empty_object_template():
    store = TemplateStore({"n1": "object template n1;"})
    p1 = compile_profile("n1", store)
    p2 = compile_profile("n1", store)
    assert p1.document == p2.document
    assert p1.hash == p2.hash
    assert b'<node name="n1"/>' in p1.document


def test_compile_corpus_deterministic():
    store = build_corpus(20, 50)
    nodes = store.object_templates()
    assert len(nodes) == 20
    first = {n: compile_profile(n, store) for n in nodes}
    for n in nodes:
        again = compile_profile(n, store)
        assert again.document == first[n].document
        assert again.hash == first[n].hash


def test_compile_violation_aborts():
    store = TemplateStore({
        "n1": 'object template n1;\n"/x" = "oops";\ntype "/x" = long;'})
    with pytest.raises(CompileFailure):
        compile_profile("n1", store)


def test_compile_requires_object_template():
    store = TemplateStore({"lib": 'template lib;\n"/x" = 1;'})
    with pytest.raises(Exception):
        compile_profile("lib", store)


# ---------------------------------------------------------------------------
# canonical document round-trips


def test_serialization_escaping_roundtrip():
    tricky = 'a & b < c > d " e \n tab\t cr\r'
    tree = evaluate(_stmts('"/s" = "%s";' % tricky.replace("\\", "\\\\")
                           .replace('"', '\\"').replace("\n", "\\n")
                           .replace("\t", "\\t").replace("\r", "\\r")))
    doc = serialize_profile("n", tree)
    name, parsed = parse_profile(doc)
    assert parsed == tree
    assert serialize_profile("n", parsed) == doc


def test_serialization_double_roundtrip():
    tree = evaluate(_stmts('"/d" = 0.1;\n"/e" = 12345.678e9;\n"/f" = -0.5;'))
    _, parsed = parse_profile(serialize_profile("n", tree))
    assert parsed == tree


def test_type_soundness_reverified_after_serialization():
    # a profile that passed its checks still passes them when the canonical
    # document is parsed back
    from corpusgen import build_corpus
    from fabmgr.pan import collect_bindings, resolve_includes

    store = build_corpus(4, 6)
    for node in store.object_templates():
        compiled = compile_profile(node, store)
        stream = resolve_includes(store.get(node), store)
        type_binds, validators = collect_bindings(stream)
        _, reparsed = parse_profile(compiled.document)
        assert reparsed == compiled.tree
        assert check_types(reparsed, type_binds) == []
        assert run_validation(reparsed, validators) == []


def test_control_chars_rejected_in_string_literals():
    with pytest.raises(PanSyntaxError, match="control character"):
        parse_template('"/x" = "bad\x01value";', "t")
    # escaped forms and raw tab are fine
    t = parse_template('"/x" = "ok\\r\\n\ttab";', "t")
    assert t.statements[0].literal.value == "ok\r\n\ttab"


def test_profile_string_roundtrip_property():
    from hypothesis import given, settings
    from hypothesis import strategies as st

    safe_text = st.text(
        alphabet=st.characters(min_codepoint=0x20, max_codepoint=0x2FFF), max_size=40
    ) | st.text(alphabet="abc&<>\"'\r\n\t\\ ", max_size=20)

    @given(safe_text, safe_text)
    @settings(max_examples=200)
    def check(value, key_seed):
        key = "k" + "".join(c for c in key_seed if c.isalnum())[:8]
        tree = Interior({key or "k": Leaf("string", value)})
        doc = serialize_profile("n", tree)
        name, parsed = parse_profile(doc)
        assert parsed == tree
        assert serialize_profile("n", parsed) == doc

    check()


def test_mon1_line_roundtrip_property():
    from hypothesis import given, settings
    from hypothesis import strategies as st

    from fabmgr.monitoring import format_line, parse_line
    from fabmgr.monitoring.sample import MetricSample

    token = st.from_regex(r"[A-Za-z0-9_.\-]{1,12}", fullmatch=True)
    value = st.text(
        alphabet=st.characters(min_codepoint=0x20, max_codepoint=0x2FFF),
        min_size=1, max_size=60)

    @given(token, token, st.integers(1, 2**40), value)
    @settings(max_examples=200)
    def check(node, metric, ts, val):
        s = MetricSample(node, metric, ts, val)
        assert parse_line(format_line(s)) == s

    check()


def test_golden_profile_document():
    """The canonical document form is pinned by a committed golden file; a
    byte change here is a format break, not a refactor."""
    import os

    data = os.path.join(os.path.dirname(__file__), "data")
    with open(os.path.join(data, "golden-node.tpl")) as f:
        source = f.read()
    with open(os.path.join(data, "golden-node.xml"), "rb") as f:
        want = f.read()
    with open(os.path.join(data, "golden-node.hash")) as f:
        want_hash = f.read().strip()
    store = TemplateStore({"golden-node": source})
    compiled = compile_profile("golden-node", store)
    assert compiled.document == want
    assert compiled.hash == want_hash
