"""Software package management: repository, agent, transactional packager."""

from .packager import ApplyFailed, SimulatedPackager
from .spma import (ApplyReport, DiffError, PackageOp, PackageTransaction,
                   PrefetchError, Spma, SpmaError, SpmaPolicy, apply_to_set,
                   cache_path, cache_prefetch, format_config_file,
                   load_config_file, parse_config_line, spma_diff)
from .swrep import (DigestMismatch, DuplicateRef, HttpSwRepClient,
                    InProcessSwRepClient, PackageRef, SwRep, SwRepClientPool,
                    SwRepError, SwRepHttpServer, Unauthorized, UnknownPackage,
                    sha256)
from .version import VersionError, compare_versions, parse_version, version_key

__all__ = [
    "ApplyFailed", "ApplyReport", "DiffError", "DigestMismatch", "DuplicateRef",
    "HttpSwRepClient", "InProcessSwRepClient", "PackageOp", "PackageRef",
    "PackageTransaction", "PrefetchError", "SimulatedPackager", "Spma",
    "SpmaError", "SpmaPolicy", "SwRep", "SwRepClientPool", "SwRepError",
    "SwRepHttpServer", "Unauthorized", "UnknownPackage", "VersionError",
    "apply_to_set", "cache_path", "cache_prefetch", "compare_versions",
    "format_config_file", "load_config_file", "parse_config_line", "sha256",
    "spma_diff", "version_key", "parse_version",
]
