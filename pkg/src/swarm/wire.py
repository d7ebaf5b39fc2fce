"""Canonical byte encodings shared across node roles.

Every digest and signature in the system is computed over the exact
bytes produced here, so the rules are deliberately rigid:

* canonical JSON: sorted keys, no whitespace, UTF-8. Floats serialize
  through repr(), i.e. the shortest string that round-trips the IEEE-754
  double, which makes JSON encode/decode byte-stable.
* hex for all binary fields (addresses, digests, signatures).
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

ZERO_DIGEST = b"\x00" * 32


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
