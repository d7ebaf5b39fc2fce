"""Relay-side storage and admission control, transport-agnostic.

A relay keeps at most the five most recent checkpoint versions, admits
only allowlisted clients, and rate-limits each client with a token
bucket. The HTTP layer in relay.py maps these results onto status
codes; tests drive the core directly.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

PROBE_PAYLOAD = bytes(range(256)) * 32   # 8 KiB, fixed content

RETAIN_VERSIONS = 5


class TokenBucket:
    """Classic token bucket: burst-capacity tokens, steady refill."""

    def __init__(self, rate: float, burst: float, clock=time.monotonic):
        if rate <= 0 or burst <= 0:
            raise ValueError("rate and burst must be positive")
        self.rate = rate
        self.burst = burst
        self.clock = clock
        self.tokens = burst
        self.last = clock()
        self._lock = threading.Lock()

    def try_acquire(self, amount: float = 1.0) -> bool:
        with self._lock:
            now = self.clock()
            self.tokens = min(self.burst, self.tokens + (now - self.last) * self.rate)
            self.last = now
            if self.tokens >= amount:
                self.tokens -= amount
                return True
            return False


@dataclass
class ServeResult:
    status: int          # 200 | 403 | 404 | 429
    payload: bytes = b""


class RelayCore:
    def __init__(self, relay_id: str, rate: float = 50.0, burst: float = 100.0,
                 clock=time.monotonic):
        self.relay_id = relay_id
        self.clock = clock
        self.rate = rate
        self.burst = burst
        self._lock = threading.Lock()
        self.manifests: dict[int, bytes] = {}
        self.shards: dict[tuple[int, int], bytes] = {}
        self.shard_arrival: dict[tuple[int, int], float] = {}
        self.allowlist: set[str] = set()
        self.buckets: dict[str, TokenBucket] = {}
        # fault injection: versions/indices served with flipped bytes
        self.corrupt_shards: set[tuple[int, int]] = set()

    # -- origin side ------------------------------------------------

    def put_manifest(self, version: int, data: bytes) -> ServeResult:
        with self._lock:
            if self.manifests and version <= max(self.manifests):
                return ServeResult(409)
            self.manifests[version] = data
            self._evict_locked()
        return ServeResult(200)

    def put_shard(self, version: int, index: int, data: bytes) -> ServeResult:
        with self._lock:
            if version not in self.manifests:
                return ServeResult(404)
            self.shards[(version, index)] = data
            self.shard_arrival[(version, index)] = time.time()
        return ServeResult(200)

    def _evict_locked(self) -> None:
        keep = sorted(self.manifests)[-RETAIN_VERSIONS:]
        for v in list(self.manifests):
            if v not in keep:
                del self.manifests[v]
        for key in list(self.shards):
            if key[0] not in keep:
                del self.shards[key]
                self.shard_arrival.pop(key, None)

    def stored_versions(self) -> list[int]:
        with self._lock:
            return sorted(self.manifests)

    # -- control plane ----------------------------------------------

    def set_allowlist(self, addresses: list[str]) -> None:
        with self._lock:
            self.allowlist = set(addresses)

    def set_fault(self, version: int, index: int) -> None:
        self.corrupt_shards.add((version, index))

    # -- client side --------------------------------------------------

    def _admit(self, client: str) -> int | None:
        with self._lock:
            if client not in self.allowlist:
                return 403
            bucket = self.buckets.get(client)
            if bucket is None:
                bucket = self.buckets[client] = TokenBucket(
                    self.rate, self.burst, self.clock)
        if not bucket.try_acquire():
            return 429
        return None

    def get_probe(self, client: str) -> ServeResult:
        denied = self._admit(client)
        if denied:
            return ServeResult(denied)
        return ServeResult(200, PROBE_PAYLOAD)

    def get_manifest(self, version: int, client: str) -> ServeResult:
        denied = self._admit(client)
        if denied:
            return ServeResult(denied)
        with self._lock:
            data = self.manifests.get(version)
        return ServeResult(200, data) if data is not None else ServeResult(404)

    def get_shard(self, version: int, index: int, client: str) -> ServeResult:
        denied = self._admit(client)
        if denied:
            return ServeResult(denied)
        with self._lock:
            data = self.shards.get((version, index))
        if data is None:
            return ServeResult(404)
        if (version, index) in self.corrupt_shards:
            data = bytes([data[0] ^ 0xFF]) + data[1:]
        return ServeResult(200, data)
