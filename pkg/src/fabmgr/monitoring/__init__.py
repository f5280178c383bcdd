"""Monitoring: sensor agents, local caches, transports, and the repository."""

from .backends import FlatFileBackend, InMemoryBackend, RepositoryBackend, day_of, read_cache_file
from .httpapi import RepositoryHttpServer
from .msa import Msa, MsaRunner
from .repository import MeasurementRepository
from .sample import (LineError, MetricConfig, MetricSample, format_line,
                     parse_line, pattern_matches, validate_sample)
from .sensors import (CallableSensor, InlineSensorLink, Sensor, SensorDead,
                      SensorError, SensorLink, SensorRegistry, serve_sensor,
                      start_sensor_host)
from .transport import (TcpIngestServer, TcpProxy, TcpTransport,
                        UdpIngestServer, UdpTransport)

__all__ = [
    "CallableSensor", "FlatFileBackend", "InMemoryBackend", "InlineSensorLink",
    "LineError", "MeasurementRepository", "MetricConfig", "MetricSample",
    "Msa", "MsaRunner", "RepositoryBackend", "RepositoryHttpServer", "Sensor",
    "SensorDead", "SensorError", "SensorLink", "SensorRegistry",
    "TcpIngestServer", "TcpProxy", "TcpTransport", "UdpIngestServer",
    "UdpTransport", "day_of", "format_line", "parse_line", "pattern_matches",
    "read_cache_file", "serve_sensor", "start_sensor_host", "validate_sample",
]
