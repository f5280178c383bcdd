"""Metric samples and the MON1 wire line.

Wire format (UDP datagram payload and TCP line alike):

    MON1 <node> <metric> <timestamp> <value...>\\n

Values are printable single-line strings; parsing them is the consumer's
problem.  Timestamps are integer epoch seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_MAX_VALUE_LEN = 4096


class LineError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSample:
    node: str
    metric: str
    timestamp: int
    value: str


@dataclass(frozen=True)
class MetricConfig:
    metric: str
    sensor: str
    period: float  # seconds; 0 = unsolicited-only
    params: str = ""

    def __post_init__(self):
        if self.period < 0:
            raise ValueError("sampling period must be >= 0")


def _check_token(kind: str, tok: str) -> str:
    if not tok or " " in tok or "\n" in tok or "\t" in tok:
        raise LineError(f"bad {kind} {tok!r}")
    return tok


def validate_sample(s: MetricSample, max_value_len: int = DEFAULT_MAX_VALUE_LEN) -> None:
    _check_token("node", s.node)
    _check_token("metric", s.metric)
    if not isinstance(s.timestamp, int) or s.timestamp <= 0:
        raise LineError(f"bad timestamp {s.timestamp!r}")
    if "\n" in s.value or "\r" in s.value:
        raise LineError("value must be a single line")
    if len(s.value) > max_value_len:
        raise LineError(f"value length {len(s.value)} exceeds {max_value_len}")


def format_line(s: MetricSample) -> str:
    return f"MON1 {s.node} {s.metric} {s.timestamp} {s.value}\n"


def parse_line(line: str) -> MetricSample:
    line = line.rstrip("\n")
    parts = line.split(" ", 4)
    if len(parts) != 5 or parts[0] != "MON1":
        raise LineError(f"malformed MON1 line {line!r}")
    _, node, metric, ts, value = parts
    _check_token("node", node)
    _check_token("metric", metric)
    try:
        tsec = int(ts)
    except ValueError:
        raise LineError(f"bad timestamp {ts!r}") from None
    if tsec <= 0:
        raise LineError(f"bad timestamp {ts!r}")
    if not value:
        raise LineError("empty value")
    return MetricSample(node, metric, tsec, value)


def pattern_matches(pattern: str, name: str) -> bool:
    """Subscription patterns: exact id, ``prefix.*`` prefix wildcard, or ``*``."""
    if pattern == "*":
        return True
    if pattern.endswith(".*"):
        return name.startswith(pattern[:-1])
    return name == pattern
