"""Compiler for the declarative configuration language."""

from .compiler import (CompiledProfile, CompileFailure, TemplateStore,
                       compile_profile, compile_stream)
from .errors import (IncludeCycleError, MissingTemplateError, PanError,
                     PanSyntaxError, PathConflictError)
from .evaluate import (check_types, collect_bindings, evaluate,
                       resolve_includes, run_validation)
from .syntax import (Assign, BaseType, Delete, Include, ListLit, ListType,
                     Location, RecordLit, RecordType, ScalarLit, Template,
                     TypeBind, ValidBind, format_path, parse_path,
                     parse_template)
from .tree import (Interior, Leaf, decode_value, encode_value, iter_leaves,
                   lookup, parse_profile, profile_hash, serialize_profile)

__all__ = [
    "Assign", "BaseType", "CompiledProfile", "CompileFailure", "Delete",
    "Include", "IncludeCycleError", "Interior", "Leaf", "ListLit", "ListType",
    "Location", "MissingTemplateError", "PanError", "PanSyntaxError",
    "PathConflictError", "RecordLit", "RecordType", "ScalarLit", "Template",
    "TemplateStore", "TypeBind", "ValidBind", "check_types",
    "collect_bindings", "compile_profile", "compile_stream", "decode_value",
    "encode_value", "evaluate", "format_path", "iter_leaves", "lookup",
    "parse_path", "parse_profile", "parse_template", "profile_hash",
    "resolve_includes", "run_validation", "serialize_profile",
]
