"""Ed25519 identities.

A node's address is its raw 32-byte public key, hex-encoded on the
wire. Private keys are raw 32-byte seeds, derivable deterministically
from a run seed so experiment reruns reuse the same fleet of addresses.
"""

from __future__ import annotations

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .prng import SplitMix64


class SigningKey:
    """Ed25519 signing key wrapper with hex addresses."""

    def __init__(self, private_bytes: bytes):
        if len(private_bytes) != 32:
            raise ValueError("private key seed must be 32 bytes")
        self._key = Ed25519PrivateKey.from_private_bytes(private_bytes)
        self.private_bytes = private_bytes
        self.public_bytes = self._key.public_key().public_bytes_raw()
        self.address = self.public_bytes.hex()

    @classmethod
    def from_seed(cls, seed: int, index: int = 0) -> "SigningKey":
        """Derive the index-th key of a run deterministically."""
        rng = SplitMix64(seed).substream(index)
        raw = b"".join(rng.next_u64().to_bytes(8, "little") for _ in range(4))
        return cls(raw)

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)


def verify_signature(address_hex: str, message: bytes, signature: bytes) -> bool:
    """True iff signature is valid for the address; never raises."""
    try:
        pub = Ed25519PublicKey.from_public_bytes(bytes.fromhex(address_hex))
        pub.verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def address_int(address_hex: str) -> int:
    """Little-endian integer of the first 8 bytes of the public key.

    This is the numeric form of a node address used in the prompt-seed
    formula; the convention is part of the protocol (docs/formats.md).
    """
    raw = bytes.fromhex(address_hex)
    return int.from_bytes(raw[:8], "little")
