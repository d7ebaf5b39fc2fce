"""Origin-side checkpoint publishing.

The manifest goes out first with every digest precomputed, then shards
stream out one by one. A shard is downloadable from a relay the moment
it lands there, so clients overlap their downloads with the rest of
the upload -- that pipelining is the whole point of sharding.
"""

from __future__ import annotations

import time

from ..keys import SigningKey
from .client import Transport
from .manifest import build_manifest


class OriginPublisher:
    def __init__(self, transport: Transport, relay_ids: list[str],
                 shard_size: int, key: SigningKey):
        self.transport = transport
        self.relay_ids = list(relay_ids)
        self.shard_size = shard_size
        self.key = key
        self.last_version: int | None = None

    def publish(self, data: bytes, version: int) -> dict:
        """Upload one version to every relay; returns wall-clock marks
        (start, manifest_done, shard_done[i], finished)."""
        if self.last_version is not None and version <= self.last_version:
            raise ValueError(f"duplicate or stale version {version}")
        manifest, shards = build_manifest(version, data, self.shard_size, self.key)
        timing = {"start": time.time(), "shard_done": []}
        blob = manifest.to_bytes()
        for relay in self.relay_ids:
            self.transport.post(relay, f"/manifest/{version}", blob)
        timing["manifest_done"] = time.time()
        for i, shard in enumerate(shards):
            for relay in self.relay_ids:
                self.transport.post(relay, f"/shard/{version}/{i}", shard)
            timing["shard_done"].append(time.time())
        timing["finished"] = time.time()
        self.last_version = version
        return timing
