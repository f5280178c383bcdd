"""Expression language tests, including the independent-interpreter oracle."""

import random

import pytest

from fabmgr.exprlang import (Binary, EvalError, Num, PathRef, Str, Unary, Var,
                             evaluate, evaluate_bool, format_expr, parse_expr,
                             returns_boolean, ExprSyntaxError)


# ---------------------------------------------------------------------------
# Independent tree-walk interpreter, written separately from the production
# one on purpose: table-driven, no shared helpers.

def _num(v):
    if isinstance(v, bool):
        raise EvalError("bool in numeric context")
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise EvalError("non-numeric string")
    return float(v)


def _bool(v):
    if not isinstance(v, bool):
        raise EvalError("non-boolean operand")
    return v


def oracle_eval(node, env, paths=None):
    kind = type(node).__name__
    if kind == "Num":
        return node.value
    if kind == "Str":
        return node.value
    if kind == "Var":
        if node.name in env:
            return env[node.name]
        raise EvalError("unbound")
    if kind == "PathRef":
        if paths is None or node.path not in paths:
            raise EvalError("no path")
        return paths[node.path]
    if kind == "Unary":
        if node.op == "-":
            return -_num(oracle_eval(node.operand, env, paths))
        return not _bool(oracle_eval(node.operand, env, paths))
    op = node.op
    if op == "&&":
        return _bool(oracle_eval(node.left, env, paths)) and _bool(oracle_eval(node.right, env, paths))
    if op == "||":
        return _bool(oracle_eval(node.left, env, paths)) or _bool(oracle_eval(node.right, env, paths))
    a = oracle_eval(node.left, env, paths)
    b = oracle_eval(node.right, env, paths)
    if op in ("==", "!="):
        if isinstance(a, str) and isinstance(b, str):
            r = a == b
        elif isinstance(a, bool) or isinstance(b, bool):
            if not (isinstance(a, bool) and isinstance(b, bool)):
                raise EvalError("bool vs non-bool")
            r = a == b
        else:
            r = _num(a) == _num(b)
        return r if op == "==" else not r
    x, y = _num(a), _num(b)
    if op == "<":
        return x < y
    if op == "<=":
        return x <= y
    if op == ">":
        return x > y
    if op == ">=":
        return x >= y
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    if y == 0.0:
        raise EvalError("div0")
    return x / y


# ---------------------------------------------------------------------------
# Random AST generator


VARS = ["load", "swap", "state", "alive", "value", "n"]


def gen_expr(rng, depth):
    if depth <= 0:
        c = rng.randrange(4)
        if c == 0:
            return Num(rng.choice([0, 1, 2, 10, -3, 0.5, 12.25]))
        if c == 1:
            return Str(rng.choice(["up", "down", "0", "1", "abc", "", "12.5"]))
        if c == 2:
            return Var(rng.choice(VARS))
        return PathRef(rng.choice(["/cpu/count", "/mem/total", "/absent"]))
    op = rng.choice(["+", "-", "*", "/", "<", "<=", ">", ">=", "==", "!=",
                     "&&", "||", "neg", "not"])
    if op == "neg":
        return Unary("-", gen_expr(rng, depth - 1))
    if op == "not":
        return Unary("!", gen_expr(rng, depth - 1))
    return Binary(op, gen_expr(rng, depth - 1), gen_expr(rng, depth - 1))


def gen_env(rng):
    env = {}
    for v in VARS:
        c = rng.randrange(4)
        if c == 0:
            env[v] = rng.choice(["12.0", "0.1", "3", "up", "down", "xyz"])
        elif c == 1:
            env[v] = rng.choice([0, 1, 4, -2])
        elif c == 2:
            env[v] = rng.choice([0.25, 2.5])
        else:
            env[v] = rng.choice([True, False])
    for v in list(env):
        if rng.random() < 0.1:
            del env[v]
    return env


def test_dual_interpreter_oracle():
    rng = random.Random(20030901)
    paths = {"/cpu/count": 4, "/mem/total": 2048.0}
    mismatches = 0
    for _ in range(1000):
        expr = gen_expr(rng, rng.randrange(1, 5))
        env = gen_env(rng)
        try:
            got = evaluate(expr, env, lambda p: _lookup(paths, p))
            got = ("ok", got)
        except EvalError:
            got = ("err",)
        try:
            want = oracle_eval(expr, env, paths)
            want = ("ok", want)
        except EvalError:
            want = ("err",)
        if got != want:
            mismatches += 1
    assert mismatches == 0


def _lookup(paths, p):
    if p not in paths:
        raise EvalError("no path")
    return paths[p]


def _canon(expr):
    # the lexer never yields negative literals; negation is a Unary node
    if isinstance(expr, Num) and not isinstance(expr.value, bool) and expr.value < 0:
        return Unary("-", Num(-expr.value))
    if isinstance(expr, Unary):
        return Unary(expr.op, _canon(expr.operand))
    if isinstance(expr, Binary):
        return Binary(expr.op, _canon(expr.left), _canon(expr.right))
    return expr


def test_roundtrip_through_source():
    rng = random.Random(771)
    for _ in range(300):
        expr = gen_expr(rng, rng.randrange(1, 4))
        assert parse_expr(format_expr(expr)) == _canon(expr)


# ---------------------------------------------------------------------------
# Spec-level behaviour


def test_rule_examples():
    e = parse_expr("load > 10 && swap < 0.2")
    assert evaluate_bool(e, {"load": "12.0", "swap": "0.1"}) is True
    e = parse_expr('state == "down"')
    assert evaluate_bool(e, {"state": "up"}) is False


def test_numeric_coercion_of_integer_looking_strings():
    e = parse_expr("n == 5")
    assert evaluate_bool(e, {"n": "5"}) is True
    assert evaluate_bool(e, {"n": "5.0"}) is True


def test_string_equality_is_raw():
    e = parse_expr('n == "5.0"')
    assert evaluate_bool(e, {"n": "5"}) is False


def test_division_by_zero_is_indeterminate():
    with pytest.raises(EvalError):
        evaluate(parse_expr("1 / n"), {"n": "0"})


def test_unparsable_numeric_is_indeterminate():
    with pytest.raises(EvalError):
        evaluate(parse_expr("n > 1"), {"n": "broken"})


def test_unbound_variable():
    with pytest.raises(EvalError):
        evaluate(parse_expr("missing > 1"), {})


def test_short_circuit_protects_right_side():
    e = parse_expr("n != 0 && 1 / n > 2")
    assert evaluate_bool(e, {"n": "0"}) is False


def test_path_vs_division():
    e = parse_expr("/cpu/count / 2 >= 2")
    assert evaluate_bool(e, {}, lambda p: {"/cpu/count": 4}[p]) is True


def test_returns_boolean_shape_check():
    assert returns_boolean(parse_expr("value >= 0"))
    assert returns_boolean(parse_expr("!(value >= 0)"))
    assert not returns_boolean(parse_expr("value + 1"))
    assert not returns_boolean(parse_expr("value"))


def test_syntax_errors():
    for bad in ["1 +", "(1", 'x == "unterminated', "a @ b", ""]:
        with pytest.raises(ExprSyntaxError):
            parse_expr(bad)
