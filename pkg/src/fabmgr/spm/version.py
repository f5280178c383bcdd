"""Package version grammar and ordering.

Versions are dotted numerics with an optional ``-release`` suffix, e.g.
``1.2.10`` or ``2.0-3b``.  Ordering: numeric components compared member-wise,
a tie-prefix makes the shorter version older, then the release suffix
compares lexicographically (no suffix sorts first).  This is a total order;
alternate comparators can be plugged into the agent.
"""

from __future__ import annotations

import re
from functools import cmp_to_key

VERSION_RE = re.compile(r"(\d+(?:\.\d+)*)(?:-([A-Za-z0-9_.]+))?\Z")


class VersionError(ValueError):
    pass


def parse_version(text: str) -> tuple:
    """Returns (numeric components tuple, release suffix string)."""
    m = VERSION_RE.match(text)
    if m is None:
        raise VersionError(f"bad version {text!r}")
    nums = tuple(int(p) for p in m.group(1).split("."))
    return nums, m.group(2) or ""


def compare_versions(a: str, b: str) -> int:
    """-1, 0 or 1 as a is older than, equal to, or newer than b."""
    anums, arel = parse_version(a)
    bnums, brel = parse_version(b)
    if anums != bnums:
        if anums < bnums:
            # tuple comparison handles both member-wise ordering and the
            # shorter-is-older tie-prefix rule
            return -1
        return 1
    if arel != brel:
        return -1 if arel < brel else 1
    return 0


version_key = cmp_to_key(compare_versions)
