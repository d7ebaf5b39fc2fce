"""Rollout file storage and validation leases.

Uploads land atomically (temp name + rename) under
``incoming/step-N/``; verdicts move them to ``accepted/step-N/`` or
``rejected/step-N/``. The trainer consumes the accepted prefix straight
from disk. Validators claim work through short leases handed out in
canonical (step, address, submission) order, one file to one validator.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path


@dataclass
class StoredFile:
    file_id: str
    step: int
    node_address: str
    submission_index: int
    path: Path
    status: str = "pending"        # pending | leased | accepted | rejected
    leased_by: str | None = None
    lease_expiry: float = 0.0


def rollout_filename(node_address: str, submission_index: int) -> str:
    return f"{node_address}_{submission_index:04d}.jsonl"


class RolloutStorage:
    def __init__(self, root: str | Path, lease_timeout: float = 30.0,
                 clock=time.monotonic):
        self.root = Path(root)
        self.lease_timeout = lease_timeout
        self.clock = clock
        self._lock = threading.Lock()
        self.files: dict[str, StoredFile] = {}
        for sub in ("incoming", "accepted", "rejected"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def store(self, step: int, node_address: str, submission_index: int,
              data: bytes) -> str:
        """Atomic write; a crashed uploader never leaves a partial file."""
        file_id = f"{step}/{node_address}/{submission_index}"
        directory = self.root / "incoming" / f"step-{step}"
        directory.mkdir(parents=True, exist_ok=True)
        final = directory / rollout_filename(node_address, submission_index)
        tmp = final.with_suffix(".tmp")
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, final)
        with self._lock:
            if file_id in self.files:
                return file_id   # idempotent re-upload
            self.files[file_id] = StoredFile(
                file_id=file_id, step=step, node_address=node_address,
                submission_index=submission_index, path=final)
        return file_id

    def claim(self, validator_id: str) -> dict | None:
        """Lease the canonically-first unvalidated file, if any."""
        with self._lock:
            now = self.clock()
            candidates = [f for f in self.files.values()
                          if f.status == "pending"
                          or (f.status == "leased" and f.lease_expiry < now)]
            if not candidates:
                return None
            f = min(candidates, key=lambda f: (f.step, f.node_address,
                                               f.submission_index))
            f.status = "leased"
            f.leased_by = validator_id
            f.lease_expiry = now + self.lease_timeout
            return {"file_id": f.file_id, "path": str(f.path),
                    "step": f.step, "node_address": f.node_address,
                    "submission_index": f.submission_index}

    def resolve(self, file_id: str, accepted: bool) -> Path | None:
        """Apply a verdict; accepted files move into the trainer's prefix."""
        with self._lock:
            f = self.files.get(file_id)
            if f is None or f.status in ("accepted", "rejected"):
                return None
            target_dir = self.root / ("accepted" if accepted else "rejected") \
                / f"step-{f.step}"
            target_dir.mkdir(parents=True, exist_ok=True)
            target = target_dir / f.path.name
            os.replace(f.path, target)
            f.path = target
            f.status = "accepted" if accepted else "rejected"
            return target

    def pending_count(self) -> int:
        with self._lock:
            return sum(1 for f in self.files.values()
                       if f.status in ("pending", "leased"))
