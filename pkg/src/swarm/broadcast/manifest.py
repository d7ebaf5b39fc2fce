"""Checkpoint manifests: the integrity root of weight distribution.

A manifest fixes the shard layout and every digest before any shard is
served, and is signed by the trainer; a client that verifies the
manifest signature, each shard digest, and the assembled digest cannot
be fed corrupted weights by any relay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..keys import SigningKey, verify_signature
from ..wire import canonical_json, sha256_hex


@dataclass(frozen=True)
class CheckpointManifest:
    version: int
    num_shards: int
    shard_size: int
    total_bytes: int
    shard_digests: tuple[str, ...]
    assembled_digest: str
    signature: str = ""

    def unsigned_fields(self) -> dict:
        return {
            "version": self.version,
            "num_shards": self.num_shards,
            "shard_size": self.shard_size,
            "total_bytes": self.total_bytes,
            "shard_digests": list(self.shard_digests),
            "assembled_digest": self.assembled_digest,
        }

    def to_bytes(self) -> bytes:
        rec = self.unsigned_fields()
        rec["signature"] = self.signature
        return canonical_json(rec)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CheckpointManifest":
        rec = json.loads(data)
        return cls(
            version=int(rec["version"]),
            num_shards=int(rec["num_shards"]),
            shard_size=int(rec["shard_size"]),
            total_bytes=int(rec["total_bytes"]),
            shard_digests=tuple(rec["shard_digests"]),
            assembled_digest=rec["assembled_digest"],
            signature=rec["signature"],
        )


def shard_bytes(data: bytes, shard_size: int) -> list[bytes]:
    if shard_size < 1:
        raise ValueError("shard_size must be >= 1")
    return [data[i:i + shard_size] for i in range(0, len(data), shard_size)]


def build_manifest(version: int, data: bytes, shard_size: int,
                   key: SigningKey) -> tuple[CheckpointManifest, list[bytes]]:
    shards = shard_bytes(data, shard_size)
    fields = {
        "version": version,
        "num_shards": len(shards),
        "shard_size": shard_size,
        "total_bytes": len(data),
        "shard_digests": [sha256_hex(s) for s in shards],
        "assembled_digest": sha256_hex(data),
    }
    signature = key.sign(canonical_json(fields)).hex()
    manifest = CheckpointManifest(
        version=version, num_shards=len(shards), shard_size=shard_size,
        total_bytes=len(data), shard_digests=tuple(fields["shard_digests"]),
        assembled_digest=fields["assembled_digest"], signature=signature)
    return manifest, shards


def verify_manifest(manifest: CheckpointManifest, trainer_address: str) -> bool:
    try:
        sig = bytes.fromhex(manifest.signature)
    except ValueError:
        return False
    return verify_signature(trainer_address,
                            canonical_json(manifest.unsigned_fields()), sig)
