"""Rollout file wire format.

Newline-delimited canonical JSON: one header line, then one line per
completion, grouped by prompt. The header carries a SHA-256 over the
record bytes and an Ed25519 signature over the rest of the header, so
the whole file is tamper-evident and attributable to its node address.
See docs/formats.md for the byte-exact layout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from ..keys import SigningKey, verify_signature
from ..wire import canonical_json, sha256_hex

SCHEMA_VERSION = 1


class RolloutSchemaError(ValueError):
    """File is structurally invalid; carries a human-readable reason."""


@dataclass
class RolloutRecord:
    node_address: str
    step: int
    submission_index: int
    task_id: int
    group_index: int
    member_index: int
    checkpoint_version: int
    output_tokens: list[int]
    chosen_probs: list[float]
    commitments: list[str]          # hex digests
    eos_prob_at_end: float | None
    r_task: int
    r_total: float
    advantage: float

    def to_record(self) -> dict:
        d = dict(self.__dict__)
        d["kind"] = "record"
        return d

    @classmethod
    def from_record(cls, rec: dict) -> "RolloutRecord":
        rec = dict(rec)
        rec.pop("kind", None)
        return cls(**rec)


@dataclass
class RolloutFile:
    node_address: str
    step: int
    submission_index: int
    checkpoint_version: int
    group_size: int
    num_groups: int
    commit_interval: int
    records: list[RolloutRecord] = field(default_factory=list)

    @property
    def file_id(self) -> str:
        return f"{self.step}-{self.node_address[:16]}-{self.submission_index}"

    def group(self, g: int) -> list[RolloutRecord]:
        lo = g * self.group_size
        return self.records[lo:lo + self.group_size]

    def header_fields(self) -> dict:
        return {
            "kind": "header",
            "schema": SCHEMA_VERSION,
            "node_address": self.node_address,
            "step": self.step,
            "submission_index": self.submission_index,
            "checkpoint_version": self.checkpoint_version,
            "group_size": self.group_size,
            "num_groups": self.num_groups,
            "commit_interval": self.commit_interval,
        }


def build_rollout_file(file: RolloutFile, key: SigningKey) -> bytes:
    if key.address != file.node_address:
        raise ValueError("signing key does not match node address")
    body = b"".join(canonical_json(r.to_record()) + b"\n" for r in file.records)
    header = file.header_fields()
    header["body_sha256"] = sha256_hex(body)
    header["signature"] = key.sign(canonical_json(header)).hex()
    return canonical_json(header) + b"\n" + body


def parse_rollout_file(data: bytes) -> RolloutFile:
    """Parse and structurally validate; raises RolloutSchemaError.

    Checks: loadable JSON lines, header shape and signature, body hash,
    per-record field sanity, complete groups of exactly group_size
    records in (group, member) order, commitment counts, finite floats.
    """
    lines = data.split(b"\n")
    if not lines or not lines[0]:
        raise RolloutSchemaError("empty file")
    if lines[-1] != b"":
        raise RolloutSchemaError("missing trailing newline")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise RolloutSchemaError(f"header not valid JSON: {e}") from None
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise RolloutSchemaError("first line is not a header")
    if header.get("schema") != SCHEMA_VERSION:
        raise RolloutSchemaError(f"unsupported schema {header.get('schema')}")
    required = {"node_address", "step", "submission_index", "checkpoint_version",
                "group_size", "num_groups", "commit_interval",
                "body_sha256", "signature"}
    missing = required - header.keys()
    if missing:
        raise RolloutSchemaError(f"header missing fields {sorted(missing)}")

    signature = header.pop("signature")
    unsigned = canonical_json(header)
    try:
        sig_ok = verify_signature(header["node_address"], unsigned,
                                  bytes.fromhex(signature))
    except ValueError:
        sig_ok = False
    if not sig_ok:
        raise RolloutSchemaError("header signature invalid")

    body = b"\n".join(lines[1:])
    if sha256_hex(body) != header["body_sha256"]:
        raise RolloutSchemaError("body hash mismatch")

    records = []
    for i, line in enumerate(lines[1:-1], start=1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            raise RolloutSchemaError(f"record line {i} not valid JSON") from None
        if rec.get("kind") != "record":
            raise RolloutSchemaError(f"line {i} is not a record")
        try:
            record = RolloutRecord.from_record(rec)
        except TypeError as e:
            raise RolloutSchemaError(f"record line {i} malformed: {e}") from None
        records.append(record)

    file = RolloutFile(
        node_address=header["node_address"],
        step=int(header["step"]),
        submission_index=int(header["submission_index"]),
        checkpoint_version=int(header["checkpoint_version"]),
        group_size=int(header["group_size"]),
        num_groups=int(header["num_groups"]),
        commit_interval=int(header["commit_interval"]),
        records=records,
    )
    if file.group_size < 2 or file.num_groups < 1:
        raise RolloutSchemaError("degenerate group shape")
    if len(records) != file.group_size * file.num_groups:
        raise RolloutSchemaError(
            f"expected {file.group_size * file.num_groups} records, "
            f"got {len(records)}")
    for idx, rec in enumerate(records):
        g, m = divmod(idx, file.group_size)
        if (rec.group_index, rec.member_index) != (g, m):
            raise RolloutSchemaError(f"record {idx} out of order")
        if (rec.node_address != file.node_address or rec.step != file.step
                or rec.submission_index != file.submission_index):
            raise RolloutSchemaError(f"record {idx} identity mismatch")
        if rec.checkpoint_version != file.checkpoint_version:
            raise RolloutSchemaError(f"record {idx} checkpoint mismatch")
        if rec.task_id != records[g * file.group_size].task_id:
            raise RolloutSchemaError(f"record {idx} task differs within group")
        if not rec.output_tokens:
            raise RolloutSchemaError(f"record {idx} has empty output")
        if len(rec.chosen_probs) != len(rec.output_tokens):
            raise RolloutSchemaError(f"record {idx} probs/tokens length mismatch")
        expected_commits = -(-len(rec.output_tokens) // file.commit_interval)
        if len(rec.commitments) != expected_commits:
            raise RolloutSchemaError(f"record {idx} wrong commitment count")
        floats = [rec.r_total, rec.advantage, *rec.chosen_probs]
        if rec.eos_prob_at_end is not None:
            floats.append(rec.eos_prob_at_end)
        if not all(isinstance(x, (int, float)) and math.isfinite(x) for x in floats):
            raise RolloutSchemaError(f"record {idx} has non-finite values")
    return file
