"""Errors raised by the configuration-language compiler."""

from __future__ import annotations


class PanError(Exception):
    """Base class; carries an optional source location."""

    def __init__(self, message: str, template: str | None = None,
                 line: int | None = None, col: int | None = None):
        loc = ""
        if template is not None:
            loc = f"{template}:"
            if line is not None:
                loc += f"{line}:"
                if col is not None:
                    loc += f"{col}:"
            loc += " "
        super().__init__(loc + message)
        self.message = message
        self.template = template
        self.line = line
        self.col = col


class PanSyntaxError(PanError):
    pass


class MissingTemplateError(PanError):
    def __init__(self, name: str, template: str | None = None, line: int | None = None):
        super().__init__(f"included template {name!r} does not exist", template, line)
        self.name = name


class IncludeCycleError(PanError):
    def __init__(self, chain: list[str]):
        super().__init__("include cycle: " + " -> ".join(chain))
        self.chain = chain


class PathConflictError(PanError):
    """A statement assigned a leaf where an interior node exists (or vice
    versa); both statement locations are reported."""

    def __init__(self, path: str, first_loc: str, second_loc: str):
        super().__init__(
            f"conflicting assignments at {path}: {second_loc} conflicts with {first_loc}")
        self.path = path
        self.first_loc = first_loc
        self.second_loc = second_loc
