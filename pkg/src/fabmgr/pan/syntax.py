"""Template source syntax: statements, type expressions, and the parser.

Statement forms:

    [object] template <name>;          optional header, marks the template kind
    "/abs/path" = <literal>;
    include <name>;
    delete "/abs/path";
    type "/abs/path" = <type-expr>;
    valid "/abs/path" = { <expr> };

Literals: true/false, decimal longs (signed 64-bit), decimal doubles with a
point or exponent, double-quoted strings with backslash escapes, lists
``[ a, b ]`` and records ``{ k = v, ... }``.  ``#`` starts a line comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .. import exprlang
from .errors import PanSyntaxError

LONG_MIN = -(2 ** 63)
LONG_MAX = 2 ** 63 - 1

WORD_RE = re.compile(r"[A-Za-z0-9_.\-]+")
COMPONENT_RE = re.compile(r"[A-Za-z0-9_.\-]+\Z")

KEYWORDS = {"template", "object", "include", "delete", "type", "valid",
            "true", "false", "boolean", "string", "long", "double",
            "list", "record"}


@dataclass(frozen=True)
class Location:
    template: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.template}:{self.line}:{self.col}"


# -- literals ---------------------------------------------------------------

Scalar = Union[bool, int, float, str]


@dataclass(frozen=True)
class ScalarLit:
    tag: str  # boolean | long | double | string
    value: Scalar


@dataclass(frozen=True)
class ListLit:
    items: tuple


@dataclass(frozen=True)
class RecordLit:
    fields: tuple  # of (name, literal)


Literal = Union[ScalarLit, ListLit, RecordLit]


# -- type expressions -------------------------------------------------------


@dataclass(frozen=True)
class BaseType:
    name: str  # boolean | string | long | double

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ListType:
    element: "TypeExpr"

    def __str__(self) -> str:
        return f"list({self.element})"


@dataclass(frozen=True)
class RecordType:
    fields: tuple  # of (name, TypeExpr, required: bool)

    def __str__(self) -> str:
        parts = ", ".join(
            f"{name}{'' if required else '?'}: {texpr}" for name, texpr, required in self.fields)
        return "record {" + parts + "}"


TypeExpr = Union[BaseType, ListType, RecordType]


# -- statements -------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    path: tuple
    literal: Literal
    loc: Location


@dataclass(frozen=True)
class Include:
    name: str
    loc: Location


@dataclass(frozen=True)
class Delete:
    path: tuple
    loc: Location


@dataclass(frozen=True)
class TypeBind:
    path: tuple
    texpr: TypeExpr
    loc: Location


@dataclass(frozen=True)
class ValidBind:
    path: tuple
    expr: exprlang.Expr
    source: str
    loc: Location


Statement = Union[Assign, Include, Delete, TypeBind, ValidBind]


@dataclass
class Template:
    name: str
    kind: str  # 'object' | 'ordinary'
    source: str
    statements: list = field(default_factory=list)

    @property
    def is_object(self) -> bool:
        return self.kind == "object"


def parse_path(text: str) -> tuple:
    """Parse an absolute slash-separated path into its component tuple."""
    if not text.startswith("/"):
        raise ValueError(f"path {text!r} is not absolute")
    if text == "/":
        raise ValueError("the root path cannot be addressed directly")
    comps = text[1:].split("/")
    for c in comps:
        if not COMPONENT_RE.match(c):
            raise ValueError(f"path {text!r} has an invalid component {c!r}")
    return tuple(comps)


def format_path(path: tuple) -> str:
    return "/" + "/".join(path)


# ---------------------------------------------------------------------------
# Lexer


@dataclass
class _Tok:
    kind: str  # word num str punct eof
    text: str
    line: int
    col: int
    value: Scalar = None
    isfloat: bool = False


# The tail entries only occur inside validator bodies, which are re-parsed
# verbatim by the expression language; the template parser itself never
# accepts them.
_PUNCT = ("=", ";", ",", "[", "]", "{", "}", "(", ")", ":", "?", "-",
          "<", ">", "!", "&", "|", "+", "*", "/")


def _lex(src: str, template: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col = 1, 1
    i, n = 0, len(src)

    def err(msg: str, l=None, c=None):
        raise PanSyntaxError(msg, template, l or line, c or col)

    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if ch == '"':
            sline, scol = line, col
            j = i + 1
            col += 1
            out = []
            while j < n and src[j] != '"':
                if src[j] == "\n":
                    err("unterminated string", sline, scol)
                if src[j] == "\\":
                    j += 1
                    col += 1
                    if j >= n:
                        err("unterminated string", sline, scol)
                    esc = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}.get(src[j])
                    if esc is None:
                        err(f"bad escape \\{src[j]}")
                    out.append(esc)
                else:
                    # C0 controls other than tab cannot survive the canonical
                    # document form (XML 1.0 forbids them even as entities)
                    if ord(src[j]) < 0x20 and src[j] != "\t":
                        err(f"control character {src[j]!r} in string literal")
                    out.append(src[j])
                j += 1
                col += 1
            if j >= n:
                err("unterminated string", sline, scol)
            toks.append(_Tok("str", src[i:j + 1], sline, scol, "".join(out)))
            i = j + 1
            col += 1
            continue
        if ch.isdigit():
            sline, scol = line, col
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
            t = _Tok("num", text, sline, scol, float(text) if isfloat else int(text))
            t.isfloat = isfloat
            toks.append(t)
            col += j - i
            i = j
            continue
        m = WORD_RE.match(src, i)
        if m and src[i] not in ".-":
            word = m.group(0)
            toks.append(_Tok("word", word, line, col))
            col += len(word)
            i = m.end()
            continue
        if ch in _PUNCT:
            toks.append(_Tok("punct", ch, line, col))
            i += 1
            col += 1
            continue
        err(f"unexpected character {ch!r}")
    toks.append(_Tok("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser


class _TemplateParser:
    def __init__(self, src: str, name: str):
        self.src = src
        self.name = name
        self.toks = _lex(src, name)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def err(self, tok: _Tok, msg: str):
        raise PanSyntaxError(msg, self.name, tok.line, tok.col)

    def expect_punct(self, text: str) -> _Tok:
        t = self.next()
        if t.kind != "punct" or t.text != text:
            self.err(t, f"expected {text!r}, got {t.text or 'end of input'!r}")
        return t

    def accept_punct(self, text: str) -> bool:
        t = self.peek()
        if t.kind == "punct" and t.text == text:
            self.i += 1
            return True
        return False

    def expect_word(self, what: str) -> _Tok:
        t = self.next()
        if t.kind != "word":
            self.err(t, f"expected {what}, got {t.text or 'end of input'!r}")
        return t

    def path_from(self, tok: _Tok) -> tuple:
        try:
            return parse_path(tok.value)
        except ValueError as e:
            self.err(tok, str(e))

    def parse(self) -> Template:
        kind = "ordinary"
        t = self.peek()
        if t.kind == "word" and t.text in ("template", "object"):
            is_object = t.text == "object"
            self.next()
            if is_object:
                kw = self.expect_word("'template'")
                if kw.text != "template":
                    self.err(kw, "expected 'template' after 'object'")
            name_tok = self.expect_word("a template name")
            if name_tok.text != self.name:
                self.err(name_tok,
                         f"header names {name_tok.text!r} but the template is stored as {self.name!r}")
            self.expect_punct(";")
            kind = "object" if is_object else "ordinary"
        statements = []
        while self.peek().kind != "eof":
            statements.append(self.statement())
        return Template(name=self.name, kind=kind, source=self.src, statements=statements)

    def statement(self) -> Statement:
        t = self.next()
        loc = Location(self.name, t.line, t.col)
        if t.kind == "str":
            path = self.path_from(t)
            self.expect_punct("=")
            lit = self.literal()
            self.expect_punct(";")
            return Assign(path, lit, loc)
        if t.kind == "word" and t.text == "include":
            name_tok = self.expect_word("a template name")
            self.expect_punct(";")
            return Include(name_tok.text, loc)
        if t.kind == "word" and t.text == "delete":
            p = self.next()
            if p.kind != "str":
                self.err(p, "expected a quoted path after 'delete'")
            path = self.path_from(p)
            self.expect_punct(";")
            return Delete(path, loc)
        if t.kind == "word" and t.text == "type":
            p = self.next()
            if p.kind != "str":
                self.err(p, "expected a quoted path after 'type'")
            path = self.path_from(p)
            self.expect_punct("=")
            texpr = self.type_expr()
            self.expect_punct(";")
            return TypeBind(path, texpr, loc)
        if t.kind == "word" and t.text == "valid":
            p = self.next()
            if p.kind != "str":
                self.err(p, "expected a quoted path after 'valid'")
            path = self.path_from(p)
            self.expect_punct("=")
            brace = self.expect_punct("{")
            expr, src_text = self.validator_body(brace)
            self.expect_punct(";")
            return ValidBind(path, expr, src_text, loc)
        self.err(t, f"expected a statement, got {t.text or 'end of input'!r}")

    def validator_body(self, open_brace: _Tok) -> tuple:
        # The validator body is handed to the expression language verbatim;
        # scan the raw source to the matching close brace.
        start = self._offset_of(open_brace) + 1
        depth = 1
        j = start
        src = self.src
        while j < len(src):
            c = src[j]
            if c == '"':
                j += 1
                while j < len(src) and src[j] != '"':
                    if src[j] == "\\":
                        j += 1
                    j += 1
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    break
            j += 1
        if j >= len(src):
            self.err(open_brace, "unterminated validator body")
        body = src[start:j]
        try:
            expr = exprlang.parse_expr(body)
        except exprlang.ExprSyntaxError as e:
            self.err(open_brace, f"bad validator expression: {e}")
        if not exprlang.returns_boolean(expr):
            self.err(open_brace, "validator expression must produce a boolean")
        # Re-sync the token stream past the close brace.
        while True:
            t = self.next()
            if t.kind == "eof":
                self.err(open_brace, "unterminated validator body")
            if t.kind == "punct" and t.text == "}" and self._offset_of(t) == j:
                break
        return expr, body.strip()

    def _offset_of(self, tok: _Tok) -> int:
        # line/col -> absolute offset
        off = 0
        for _ in range(tok.line - 1):
            off = self.src.index("\n", off) + 1
        return off + tok.col - 1

    def literal(self) -> Literal:
        t = self.next()
        if t.kind == "word" and t.text in ("true", "false"):
            return ScalarLit("boolean", t.text == "true")
        if t.kind == "num":
            return self._number(t, negate=False)
        if t.kind == "punct" and t.text == "-":
            num = self.next()
            if num.kind != "num":
                self.err(num, "expected a number after '-'")
            return self._number(num, negate=True)
        if t.kind == "str":
            return ScalarLit("string", t.value)
        if t.kind == "punct" and t.text == "[":
            items = []
            if not self.accept_punct("]"):
                while True:
                    items.append(self.literal())
                    if self.accept_punct("]"):
                        break
                    self.expect_punct(",")
            return ListLit(tuple(items))
        if t.kind == "punct" and t.text == "{":
            fields = []
            seen = set()
            if not self.accept_punct("}"):
                while True:
                    k = self.expect_word("a field name")
                    if k.text in seen:
                        self.err(k, f"duplicate record field {k.text!r}")
                    seen.add(k.text)
                    self.expect_punct("=")
                    fields.append((k.text, self.literal()))
                    if self.accept_punct("}"):
                        break
                    self.expect_punct(",")
            return RecordLit(tuple(fields))
        self.err(t, f"expected a literal, got {t.text or 'end of input'!r}")

    def _number(self, t: _Tok, negate: bool) -> ScalarLit:
        if t.isfloat:
            v = -t.value if negate else t.value
            return ScalarLit("double", v)
        v = -t.value if negate else t.value
        if not (LONG_MIN <= v <= LONG_MAX):
            self.err(t, f"long literal {v} out of 64-bit range")
        return ScalarLit("long", v)

    def type_expr(self) -> TypeExpr:
        t = self.expect_word("a type")
        if t.text in ("boolean", "string", "long", "double"):
            return BaseType(t.text)
        if t.text == "list":
            self.expect_punct("(")
            inner = self.type_expr()
            self.expect_punct(")")
            return ListType(inner)
        if t.text == "record":
            self.expect_punct("{")
            fields = []
            seen = set()
            if not self.accept_punct("}"):
                while True:
                    k = self.expect_word("a field name")
                    if k.text in seen:
                        self.err(k, f"duplicate record field {k.text!r}")
                    seen.add(k.text)
                    required = not self.accept_punct("?")
                    self.expect_punct(":")
                    fields.append((k.text, self.type_expr(), required))
                    if self.accept_punct("}"):
                        break
                    self.expect_punct(",")
            return RecordType(tuple(fields))
        self.err(t, f"unknown type {t.text!r}")


def parse_template(source: str, name: str) -> Template:
    """Parse template source; raises PanSyntaxError with line/column on the
    first syntax error."""
    return _TemplateParser(source, name).parse()
