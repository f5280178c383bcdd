"""Configuration database service."""

from .server import CdbHttpServer, UdpNotifier
from .service import (CdbBusy, CdbError, CdbService, CommitRejected,
                      CommitRequest, UnknownNode, UnknownVersion, Version,
                      format_notification, parse_notification)

__all__ = [
    "CdbBusy", "CdbError", "CdbHttpServer", "CdbService", "CommitRejected",
    "CommitRequest", "UdpNotifier", "UnknownNode", "UnknownVersion", "Version",
    "format_notification", "parse_notification",
]
