from .manifest import CheckpointManifest, build_manifest, shard_bytes, verify_manifest
from .stats import RelayStats, StatsBook, select_relay, selection_probs
from .store import RelayCore, TokenBucket
from .client import DownloadClient, DownloadError, StalenessError
from .origin import OriginPublisher

__all__ = [
    "CheckpointManifest", "build_manifest", "shard_bytes", "verify_manifest",
    "RelayStats", "StatsBook", "select_relay", "selection_probs",
    "RelayCore", "TokenBucket", "DownloadClient", "DownloadError",
    "StalenessError", "OriginPublisher",
]
