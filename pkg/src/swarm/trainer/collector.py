"""Deterministic batch assembly from validated rollout files.

The trainer consumes groups in canonical (submission_index, address)
order, never wall-clock arrival order, and only from *complete*
submission levels: level j counts once every expected worker's j-th
file for the step has a verdict. Late uploads beyond the level where
the batch filled can therefore never change which groups were chosen,
which is what makes whole runs replay byte-identically despite real
processes racing over HTTP.

Groups whose rewards are all equal carry zero advantage everywhere and
are discarded here; the step is ready only once ``prompts_per_step``
non-degenerate groups are available. Rollouts generated against a
checkpoint older than the staleness window are dropped too.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..worker.files import RolloutFile, RolloutSchemaError, parse_rollout_file


@dataclass
class GroupData:
    node_address: str
    submission_index: int
    group_index: int
    task_id: int
    checkpoint_version: int
    records: list            # RolloutRecord

    @property
    def degenerate(self) -> bool:
        first = self.records[0].r_total
        return all(r.r_total == first for r in self.records)

    def sort_key(self):
        return (self.submission_index, self.node_address, self.group_index)


@dataclass
class CollectResult:
    ready: bool
    batch: list[GroupData]
    all_groups: list[GroupData]       # every usable group in complete levels
    degenerate: int
    stale: int
    levels_complete: int
    quota_exhausted: bool


def _resolved_files(run_dir: Path, step: int) -> dict[tuple[str, int], tuple[str, Path]]:
    """(address, sub) -> (verdict, path) for every resolved file of a step."""
    out = {}
    for verdict in ("accepted", "rejected"):
        directory = run_dir / verdict / f"step-{step}"
        if not directory.is_dir():
            continue
        for path in directory.iterdir():
            if not path.name.endswith(".jsonl"):
                continue
            stem = path.name[:-len(".jsonl")]
            addr, _, sub = stem.rpartition("_")
            out[(addr, int(sub))] = (verdict, path)
    return out


def collect_step(run_dir: Path, step: int, expected_workers: list[str],
                 submissions_per_worker: int, prompts_per_step: int,
                 current_version: int, staleness_window: int) -> CollectResult:
    """One scan pass; call again after more verdicts land."""
    resolved = _resolved_files(Path(run_dir), step)
    groups: list[GroupData] = []
    stale = 0
    levels_complete = 0
    for level in range(submissions_per_worker):
        if any((w, level) not in resolved for w in expected_workers):
            break
        levels_complete = level + 1
        for addr in sorted(expected_workers):
            verdict, path = resolved[(addr, level)]
            if verdict != "accepted":
                continue
            try:
                file = parse_rollout_file(path.read_bytes())
            except RolloutSchemaError:
                continue
            if file.checkpoint_version < current_version - staleness_window:
                stale += file.num_groups
                continue
            for g in range(file.num_groups):
                groups.append(GroupData(
                    node_address=addr, submission_index=level, group_index=g,
                    task_id=file.group(g)[0].task_id,
                    checkpoint_version=file.checkpoint_version,
                    records=file.group(g)))
    groups.sort(key=GroupData.sort_key)
    usable = [g for g in groups if not g.degenerate]
    degenerate = len(groups) - len(usable)
    ready = len(usable) >= prompts_per_step
    return CollectResult(
        ready=ready,
        batch=usable[:prompts_per_step] if ready else [],
        all_groups=groups,
        degenerate=degenerate,
        stale=stale,
        levels_complete=levels_complete,
        quota_exhausted=levels_complete >= submissions_per_worker,
    )
