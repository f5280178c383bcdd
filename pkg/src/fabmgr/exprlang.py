"""Small boolean/numeric/string expression language.

One interpreter, two hosts: configuration-value validators run it against a
profile tree, the correlation engine runs it against metric samples.  Values
are bool, int, float or str.  Arithmetic and ordering comparisons coerce to
double; equality between two strings compares raw strings; anything that
cannot be coerced raises EvalError, which hosts surface as "indeterminate"
rather than false.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

Value = Union[bool, int, float, str]


class ExprSyntaxError(Exception):
    def __init__(self, pos: int, message: str):
        super().__init__(f"at offset {pos}: {message}")
        self.pos = pos
        self.message = message


class EvalError(Exception):
    """Raised when an expression cannot produce a value (division by zero,
    unparsable numeric, unbound variable, missing path)."""


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: Union[int, float]


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class PathRef:
    """Absolute configuration-path reference, e.g. /mem/total (validator host
    only; the rule host rejects it at bind time)."""

    path: str


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / < <= > >= == != && ||
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Str, Var, PathRef, Unary, Binary]

_BOOL_ROOTS = {"<", "<=", ">", ">=", "==", "!=", "&&", "||"}


def returns_boolean(expr: Expr) -> bool:
    """Static shape check: the root must be a comparison or boolean operator."""
    if isinstance(expr, Binary):
        return expr.op in _BOOL_ROOTS
    if isinstance(expr, Unary):
        return expr.op == "!"
    return False


# ---------------------------------------------------------------------------
# Lexer

_PUNCT = ("&&", "||", "<=", ">=", "==", "!=", "<", ">", "+", "-", "*", "/", "!", "(", ")")
_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | set("0123456789")
_PATH_CHARS = _IDENT_CONT | set(".-")


@dataclass
class _Tok:
    kind: str  # 'num' 'str' 'ident' 'path' 'punct' 'eof'
    text: str
    pos: int
    value: Value = None


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, n = 0, len(src)

    def prev_ends_value() -> bool:
        return bool(toks) and (
            toks[-1].kind in ("num", "str", "ident", "path")
            or toks[-1].text == ")"
        )

    while i < n:
        c = src[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c == '"':
            j = i + 1
            out = []
            while j < n and src[j] != '"':
                if src[j] == "\\":
                    j += 1
                    if j >= n:
                        raise ExprSyntaxError(i, "unterminated string")
                    esc = src[j]
                    out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc))
                    if out[-1] is None:
                        raise ExprSyntaxError(j, f"bad escape \\{esc}")
                else:
                    out.append(src[j])
                j += 1
            if j >= n:
                raise ExprSyntaxError(i, "unterminated string")
            toks.append(_Tok("str", src[i : j + 1], i, "".join(out)))
            i = j + 1
            continue
        if c.isdigit():
            j = i
            isfloat = False
            while j < n and src[j].isdigit():
                j += 1
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                isfloat = True
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    isfloat = True
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            toks.append(_Tok("num", text, i, float(text) if isfloat else int(text)))
            i = j
            continue
        if c in _IDENT_START:
            j = i
            while j < n and src[j] in _IDENT_CONT:
                j += 1
            toks.append(_Tok("ident", src[i:j], i))
            i = j
            continue
        # '/' is division after a value, an absolute path reference otherwise
        # (same trick JavaScript uses to tell division from regex literals).
        if c == "/" and not prev_ends_value():
            j = i
            parts = 0
            while j < n and src[j] == "/":
                j += 1
                k = j
                while k < n and src[k] in _PATH_CHARS:
                    k += 1
                if k == j:
                    raise ExprSyntaxError(i, "empty path component")
                parts += 1
                j = k
                if j < n and src[j] == "/":
                    continue
                break
            if parts == 0:
                raise ExprSyntaxError(i, "empty path")
            toks.append(_Tok("path", src[i:j], i))
            i = j
            continue
        for p in _PUNCT:
            if src.startswith(p, i):
                toks.append(_Tok("punct", p, i))
                i += len(p)
                break
        else:
            raise ExprSyntaxError(i, f"unexpected character {c!r}")
    toks.append(_Tok("eof", "", n))
    return toks


# ---------------------------------------------------------------------------
# Parser (precedence: || < && < equality < relational < additive <
# multiplicative < unary; relational and equality are non-associative)


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.peek().kind == "punct" and self.peek().text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        t = self.next()
        if t.kind != "punct" or t.text != text:
            raise ExprSyntaxError(t.pos, f"expected {text!r}, got {t.text or 'end of input'!r}")

    def parse(self) -> Expr:
        e = self.or_expr()
        t = self.peek()
        if t.kind != "eof":
            raise ExprSyntaxError(t.pos, f"trailing input {t.text!r}")
        return e

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.accept("||"):
            e = Binary("||", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.equality()
        while self.accept("&&"):
            e = Binary("&&", e, self.equality())
        return e

    def equality(self) -> Expr:
        e = self.relational()
        for op in ("==", "!="):
            if self.accept(op):
                return Binary(op, e, self.relational())
        return e

    def relational(self) -> Expr:
        e = self.additive()
        for op in ("<=", ">=", "<", ">"):
            if self.accept(op):
                return Binary(op, e, self.additive())
        return e

    def additive(self) -> Expr:
        e = self.multiplicative()
        while True:
            if self.accept("+"):
                e = Binary("+", e, self.multiplicative())
            elif self.accept("-"):
                e = Binary("-", e, self.multiplicative())
            else:
                return e

    def multiplicative(self) -> Expr:
        e = self.unary()
        while True:
            if self.accept("*"):
                e = Binary("*", e, self.unary())
            elif self.accept("/"):
                e = Binary("/", e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("-", self.unary())
        if self.accept("!"):
            return Unary("!", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        t = self.next()
        if t.kind == "num":
            return Num(t.value)
        if t.kind == "str":
            return Str(t.value)
        if t.kind == "ident":
            return Var(t.text)
        if t.kind == "path":
            return PathRef(t.text)
        if t.kind == "punct" and t.text == "(":
            e = self.or_expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(t.pos, f"expected a value, got {t.text or 'end of input'!r}")


def parse_expr(src: str) -> Expr:
    return _Parser(_tokenize(src)).parse()


# ---------------------------------------------------------------------------
# Evaluation


def to_number(v: Value) -> float:
    if isinstance(v, bool):
        raise EvalError("boolean used in numeric context")
    if isinstance(v, (int, float)):
        return float(v)
    try:
        return float(v)
    except ValueError:
        raise EvalError(f"value {v!r} is not numeric") from None


def _require_bool(v: Value, side: str) -> bool:
    if not isinstance(v, bool):
        raise EvalError(f"{side} operand of boolean operator is not boolean")
    return v


PathLookup = Callable[[str], Value]


def evaluate(expr: Expr, env: dict[str, Value], lookup_path: PathLookup | None = None) -> Value:
    """Evaluate ``expr``; raises EvalError on any degenerate input."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Str):
        return expr.value
    if isinstance(expr, Var):
        if expr.name not in env:
            raise EvalError(f"unbound variable {expr.name!r}")
        return env[expr.name]
    if isinstance(expr, PathRef):
        if lookup_path is None:
            raise EvalError("path references are not available here")
        return lookup_path(expr.path)
    if isinstance(expr, Unary):
        if expr.op == "-":
            return -to_number(evaluate(expr.operand, env, lookup_path))
        return not _require_bool(evaluate(expr.operand, env, lookup_path), "the")
    if isinstance(expr, Binary):
        op = expr.op
        if op == "&&":
            if not _require_bool(evaluate(expr.left, env, lookup_path), "left"):
                return False
            return _require_bool(evaluate(expr.right, env, lookup_path), "right")
        if op == "||":
            if _require_bool(evaluate(expr.left, env, lookup_path), "left"):
                return True
            return _require_bool(evaluate(expr.right, env, lookup_path), "right")
        lv = evaluate(expr.left, env, lookup_path)
        rv = evaluate(expr.right, env, lookup_path)
        if op in ("==", "!="):
            if isinstance(lv, str) and isinstance(rv, str):
                eq = lv == rv
            elif isinstance(lv, bool) or isinstance(rv, bool):
                if not (isinstance(lv, bool) and isinstance(rv, bool)):
                    raise EvalError("boolean compared with non-boolean")
                eq = lv == rv
            else:
                eq = to_number(lv) == to_number(rv)
            return eq if op == "==" else not eq
        if op in ("<", "<=", ">", ">="):
            ln, rn = to_number(lv), to_number(rv)
            return {"<": ln < rn, "<=": ln <= rn, ">": ln > rn, ">=": ln >= rn}[op]
        ln, rn = to_number(lv), to_number(rv)
        if op == "+":
            return ln + rn
        if op == "-":
            return ln - rn
        if op == "*":
            return ln * rn
        if rn == 0.0:
            raise EvalError("division by zero")
        return ln / rn
    raise TypeError(f"not an expression node: {expr!r}")


def evaluate_bool(expr: Expr, env: dict[str, Value], lookup_path: PathLookup | None = None) -> bool:
    v = evaluate(expr, env, lookup_path)
    if not isinstance(v, bool):
        raise EvalError("expression did not produce a boolean")
    return v


# ---------------------------------------------------------------------------
# Serialization (used for rule round-trips; compound operands are always
# parenthesized so precedence never has to be reconstructed)


def _escape_str(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def format_expr(expr: Expr) -> str:
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Str):
        return _escape_str(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, PathRef):
        return expr.path
    if isinstance(expr, Unary):
        return f"{expr.op}{_wrap(expr.operand)}"
    if isinstance(expr, Binary):
        return f"{_wrap(expr.left)} {expr.op} {_wrap(expr.right)}"
    raise TypeError(f"not an expression node: {expr!r}")


def _wrap(expr: Expr) -> str:
    text = format_expr(expr)
    if isinstance(expr, (Binary, Unary)):
        return f"({text})"
    return text
