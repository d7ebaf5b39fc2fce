"""Hash-chained, signed, append-only event log.

Each event's hash covers the previous hash plus the canonical encoding
of (seq, kind, payload, signer), and the pool owner signs the hash.
Appends cannot disturb verified prefixes; any in-place edit or
reordering breaks the chain at the first touched index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..keys import SigningKey, verify_signature
from ..wire import canonical_json, sha256_hex

GENESIS_HASH = "0" * 64

EVENT_KINDS = ("register", "invite_accept", "contribution", "slash")


@dataclass(frozen=True)
class LedgerEvent:
    seq: int
    kind: str
    payload: dict
    signer: str
    prev_hash: str
    this_hash: str
    signature: str

    def to_record(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_record(cls, rec: dict) -> "LedgerEvent":
        return cls(**rec)


def _event_hash(prev_hash: str, seq: int, kind: str, payload: dict,
                signer: str) -> str:
    body = canonical_json({"seq": seq, "kind": kind, "payload": payload,
                           "signer": signer})
    return sha256_hex(bytes.fromhex(prev_hash) + body)


class Ledger:
    def __init__(self, key: SigningKey, path: str | Path | None = None):
        self.key = key
        self.path = Path(path) if path else None
        self.events: list[LedgerEvent] = []

    def append(self, kind: str, payload: dict) -> LedgerEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind}")
        seq = len(self.events)
        prev = self.events[-1].this_hash if self.events else GENESIS_HASH
        this = _event_hash(prev, seq, kind, payload, self.key.address)
        event = LedgerEvent(
            seq=seq, kind=kind, payload=payload, signer=self.key.address,
            prev_hash=prev, this_hash=this,
            signature=self.key.sign(bytes.fromhex(this)).hex(),
        )
        self.events.append(event)
        if self.path:
            with open(self.path, "ab") as f:
                f.write(canonical_json(event.to_record()) + b"\n")
        return event


def load_events(path: str | Path) -> list[LedgerEvent]:
    events = []
    with open(path, "rb") as f:
        for line in f:
            if line.strip():
                events.append(LedgerEvent.from_record(json.loads(line)))
    return events


def ledger_verify(events: list[LedgerEvent]) -> int | None:
    """Replay the chain; returns the first violating index, or None."""
    prev = GENESIS_HASH
    last_seq = -1
    for i, ev in enumerate(events):
        if ev.seq <= last_seq:
            return i
        if ev.prev_hash != prev:
            return i
        expect = _event_hash(ev.prev_hash, ev.seq, ev.kind, ev.payload, ev.signer)
        if ev.this_hash != expect:
            return i
        try:
            sig_ok = verify_signature(ev.signer, bytes.fromhex(ev.this_hash),
                                      bytes.fromhex(ev.signature))
        except ValueError:
            sig_ok = False
        if not sig_ok:
            return i
        prev = ev.this_hash
        last_seq = ev.seq
    return None
