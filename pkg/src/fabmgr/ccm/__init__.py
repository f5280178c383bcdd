"""Node-side configuration cache manager."""

from .cache import (CachedProfile, CacheEmpty, Ccm, CcmError, CcmPoller,
                    CcmUdpListener, FetchFailed, HttpProfileFetcher,
                    PathNotFound)

__all__ = [
    "CachedProfile", "CacheEmpty", "Ccm", "CcmError", "CcmPoller",
    "CcmUdpListener", "FetchFailed", "HttpProfileFetcher", "PathNotFound",
]
