"""Checkpoint download client.

Fetches shards concurrently, spreading load across relays by sampling
from the throughput estimates in StatsBook. Every byte is verified:
shard digests on receipt (bad shards are refetched from elsewhere),
the assembled digest against the signed manifest at the end. A failed
assembly is never retried -- by the time a re-download finished the
version would be stale anyway, so the caller moves on.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol

from ..prng import SplitMix64
from ..wire import sha256_hex
from .manifest import CheckpointManifest, verify_manifest
from .stats import StatsBook, select_relay
from .store import PROBE_PAYLOAD


class Transport(Protocol):
    def get(self, relay_id: str, path: str) -> tuple[int, bytes]: ...
    def post(self, relay_id: str, path: str, data: bytes) -> tuple[int, bytes]: ...


class DownloadError(Exception):
    """Download failed for one version; the caller may try another."""


class IntegrityError(DownloadError):
    """Assembled checkpoint did not match its manifest; skip this version."""


class StalenessError(DownloadError):
    """No relay would serve us; nothing can be downloaded right now."""


class DownloadClient:
    def __init__(self, relay_ids: list[str], transport: Transport,
                 trainer_address: str, rng_seed: int = 0,
                 p_min: float = 0.05, beta: float = 0.3,
                 heal_after: float = 10.0, max_workers: int = 4,
                 clock=time.monotonic):
        self.relay_ids = list(relay_ids)
        self.transport = transport
        self.trainer_address = trainer_address
        self.stats = StatsBook(beta=beta, heal_after=heal_after)
        for r in self.relay_ids:
            self.stats.ensure(r)
        self.p_min = p_min
        self.rng = SplitMix64(rng_seed)
        self.clock = clock
        self.max_workers = max_workers
        self._lock = threading.Lock()
        self._probed = False

    # -- stats plumbing ----------------------------------------------

    def _timed_get(self, relay_id: str, path: str,
                   expect_bytes: int | None = None) -> tuple[int, bytes]:
        t0 = self.clock()
        try:
            status, payload = self.transport.get(relay_id, path)
        except Exception:
            status, payload = 0, b""
        elapsed = max(self.clock() - t0, 1e-9)
        ok = status == 200 and (expect_bytes is None or len(payload) == expect_bytes)
        with self._lock:
            self.stats.update(relay_id, len(payload) / elapsed if ok else 0.0,
                              ok, self.clock())
        return status, payload

    def _pick_relay(self) -> str:
        with self._lock:
            return select_relay(self.stats.relays, self.rng, self.p_min)

    def probe_all(self) -> None:
        """Seed bandwidth and success estimates with a dummy download."""
        for r in self.relay_ids:
            self._timed_get(r, "/probe", expect_bytes=len(PROBE_PAYLOAD))
        self._probed = True

    def healing_tick(self) -> None:
        with self._lock:
            self.stats.healing_tick(self.clock())

    # -- downloads -----------------------------------------------------

    def fetch_manifest(self, version: int) -> CheckpointManifest:
        attempts = 3 * len(self.relay_ids)
        throttled_only = True
        for _ in range(attempts):
            relay = self._pick_relay()
            status, payload = self._timed_get(relay, f"/manifest/{version}")
            if status == 200:
                try:
                    manifest = CheckpointManifest.from_bytes(payload)
                except Exception:
                    continue
                if manifest.version != version:
                    continue
                if not verify_manifest(manifest, self.trainer_address):
                    continue
                return manifest
            if status not in (429,):
                throttled_only = False
        raise StalenessError(
            f"no relay served manifest {version}"
            + (" (throttled)" if throttled_only else ""))

    def _fetch_shard(self, version: int, index: int, digest: str) -> bytes:
        for _ in range(4 + 2 * len(self.relay_ids)):
            relay = self._pick_relay()
            status, payload = self._timed_get(relay, f"/shard/{version}/{index}")
            if status == 200 and sha256_hex(payload) == digest:
                return payload
            if status == 200:
                # digest mismatch: count it as a failure for that relay
                with self._lock:
                    self.stats.update(relay, 0.0, False, self.clock())
        raise StalenessError(f"shard {index} of version {version} unavailable")

    def download_version(self, version: int,
                         on_first_shard=None) -> bytes:
        """Fetch, verify and assemble one checkpoint version.

        Raises IntegrityError when the assembled digest does not match
        (the version should be skipped, not retried) and StalenessError
        when relays cannot serve us at all.
        """
        if not self._probed:
            self.probe_all()
        manifest = self.fetch_manifest(version)
        shards: list[bytes | None] = [None] * manifest.num_shards

        def grab(i: int) -> None:
            shards[i] = self._fetch_shard(version, i, manifest.shard_digests[i])
            if i == 0 and on_first_shard is not None:
                on_first_shard(time.time())

        if manifest.num_shards:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                futures = [pool.submit(grab, i) for i in range(manifest.num_shards)]
                for f in futures:
                    f.result()
        data = b"".join(shards)  # ordered assembly
        if len(data) != manifest.total_bytes:
            raise IntegrityError("assembled size mismatch")
        if sha256_hex(data) != manifest.assembled_digest:
            raise IntegrityError("assembled digest mismatch")
        return data
