"""Typed configuration tree and its canonical XML document form.

The canonical form is what makes profile compilation deterministic: keys are
sorted lexicographically, attribute order is fixed, escaping is fixed, and
doubles use shortest round-trip formatting, so equal trees always produce
byte-identical documents.  The exact element and attribute names are pinned
in docs/formats.md and by golden files under tests/data/.
"""

from __future__ import annotations

import hashlib
import xml.etree.ElementTree as ET
from typing import Iterator, Optional, Union

from .syntax import Scalar, format_path

PROFILE_FORMAT_VERSION = "1"

_TAGS = ("boolean", "string", "long", "double")


class Leaf:
    __slots__ = ("tag", "value", "origin")

    def __init__(self, tag: str, value: Scalar, origin=None):
        self.tag = tag
        self.value = value
        self.origin = origin

    def __eq__(self, other):
        return isinstance(other, Leaf) and self.tag == other.tag and self.value == other.value

    def __repr__(self):
        return f"Leaf({self.tag}, {self.value!r})"


class Interior:
    __slots__ = ("children", "origin")

    def __init__(self, children: Optional[dict] = None, origin=None):
        self.children = children if children is not None else {}
        self.origin = origin

    def __eq__(self, other):
        return isinstance(other, Interior) and self.children == other.children

    def __repr__(self):
        return f"Interior({self.children!r})"


Node = Union[Leaf, Interior]


def lookup(root: Interior, path: tuple) -> Optional[Node]:
    node: Node = root
    for comp in path:
        if not isinstance(node, Interior):
            return None
        node = node.children.get(comp)
        if node is None:
            return None
    return node


def iter_leaves(root: Interior, prefix: tuple = ()) -> Iterator[tuple]:
    """Yield (path, Leaf) pairs; empty interior nodes yield (path, Interior)
    so that tree diffs can see them."""
    for key in sorted(root.children):
        child = root.children[key]
        path = prefix + (key,)
        if isinstance(child, Leaf):
            yield path, child
        elif not child.children:
            yield path, child
        else:
            yield from iter_leaves(child, path)


def encode_value(tag: str, value: Scalar) -> str:
    if tag == "boolean":
        return "true" if value else "false"
    if tag == "long":
        return str(value)
    if tag == "double":
        return repr(value)
    return value  # string


def decode_value(tag: str, text: str) -> Scalar:
    if tag == "boolean":
        if text == "true":
            return True
        if text == "false":
            return False
        raise ValueError(f"bad boolean value {text!r}")
    if tag == "long":
        return int(text)
    if tag == "double":
        return float(text)
    if tag == "string":
        return text
    raise ValueError(f"unknown type tag {tag!r}")


def _esc_text(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
             .replace("\r", "&#13;").replace("\n", "&#10;").replace("\t", "&#9;"))


def _esc_attr(s: str) -> str:
    return _esc_text(s).replace('"', "&quot;")


def serialize_profile(node_name: str, root: Interior) -> bytes:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<profile version="{PROFILE_FORMAT_VERSION}">']
    if root.children:
        lines.append(f'  <node name="{_esc_attr(node_name)}">')
        _write_children(lines, root, 2)
        lines.append("  </node>")
    else:
        lines.append(f'  <node name="{_esc_attr(node_name)}"/>')
    lines.append("</profile>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _write_children(lines: list, node: Interior, depth: int) -> None:
    pad = "  " * depth
    for key in sorted(node.children):
        child = node.children[key]
        if isinstance(child, Leaf):
            text = _esc_text(encode_value(child.tag, child.value))
            lines.append(f'{pad}<element name="{_esc_attr(key)}" type="{child.tag}">{text}</element>')
        elif child.children:
            lines.append(f'{pad}<element name="{_esc_attr(key)}">')
            _write_children(lines, child, depth + 1)
            lines.append(f"{pad}</element>")
        else:
            lines.append(f'{pad}<element name="{_esc_attr(key)}"/>')
    return


def profile_hash(document: bytes) -> str:
    return hashlib.sha256(document).hexdigest()


def parse_profile(document: bytes) -> tuple:
    """Parse a canonical profile document; returns (node_name, root)."""
    xml_root = ET.fromstring(document)
    if xml_root.tag != "profile":
        raise ValueError(f"not a profile document (root element {xml_root.tag!r})")
    node_els = list(xml_root)
    if len(node_els) != 1 or node_els[0].tag != "node":
        raise ValueError("profile document must contain exactly one <node>")
    node_el = node_els[0]
    name = node_el.get("name")
    if name is None:
        raise ValueError("<node> is missing its name attribute")
    return name, _parse_children(node_el)


def _parse_children(el) -> Interior:
    node = Interior()
    for child in el:
        if child.tag != "element":
            raise ValueError(f"unexpected element <{child.tag}>")
        key = child.get("name")
        if key is None:
            raise ValueError("<element> is missing its name attribute")
        if key in node.children:
            raise ValueError(f"duplicate key {key!r}")
        tag = child.get("type")
        if tag is not None:
            if tag not in _TAGS:
                raise ValueError(f"unknown type tag {tag!r}")
            node.children[key] = Leaf(tag, decode_value(tag, child.text or ""))
        else:
            node.children[key] = _parse_children(child)
    return node


def typed_value(node: Node, path: tuple):
    """Return (tag, value) for a leaf; raises LookupError variants for hosts."""
    if node is None:
        raise KeyError(format_path(path))
    if isinstance(node, Interior):
        raise IsADirectoryError(format_path(path))
    return node.tag, node.value
