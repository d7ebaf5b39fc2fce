"""The optimization loop.

Per rollout step: old log-probs for the whole batch are computed once
with the params as they stand when training begins (NOT the weights
that generated the rollouts -- staleness is data, not ratios), the
batch is split into micro_steps slices, and each slice takes one
clipped SGD update. Any non-finite value halts the run after writing
the last good checkpoint; instability is something to surface, never
to skip past.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ModelConfig, TrainConfig
from ..policy import (
    NumericError,
    PolicyParams,
    SequenceItem,
    WarmupSGD,
    gradient,
    params_to_bytes,
    sequence_logprobs,
)
from ..tasks import Task, task_for_step
from .collector import GroupData

METRIC_COLUMNS = [
    "step", "micro_step", "loss", "grad_norm", "clip_fraction",
    "entropy", "kl", "batch_task_reward", "batch_length_penalty",
    "task_reward_all", "length_penalty_all", "lr",
    "consumed_groups", "degenerate_discarded", "version_used",
]


class TrainHalt(RuntimeError):
    """Raised when a non-finite value stops the run."""


@dataclass
class MetricsLog:
    path: Path
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.path = Path(self.path)
        if not self.path.exists():
            with open(self.path, "w", newline="") as f:
                csv.DictWriter(f, METRIC_COLUMNS).writeheader()

    def append(self, row: dict) -> None:
        self.rows.append(row)
        with open(self.path, "a", newline="") as f:
            csv.DictWriter(f, METRIC_COLUMNS).writerow(row)


def reward_summary(groups: list[GroupData]) -> tuple[float, float]:
    """(mean task reward, mean length penalty) over groups' records."""
    if not groups:
        return math.nan, math.nan
    r_task, penalty, n = 0.0, 0.0, 0
    for g in groups:
        for rec in g.records:
            r_task += rec.r_task
            penalty += rec.r_task - rec.r_total
            n += 1
    return r_task / n, penalty / n


class TrainerLoop:
    def __init__(self, mcfg: ModelConfig, tcfg: TrainConfig,
                 params: PolicyParams, dataset: list[Task],
                 metrics: MetricsLog, checkpoint_dir: str | Path,
                 budgets: tuple[int, ...]):
        self.mcfg = mcfg
        self.tcfg = tcfg
        self.params = params
        self.ref_params = params.copy()       # KL reference: initial model
        self.dataset = {t.task_id: t for t in dataset}
        self.metrics = metrics
        self.checkpoint_dir = Path(checkpoint_dir)
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        self.budgets = budgets
        self.optimizer = WarmupSGD(tcfg)
        self.save_checkpoint(0)

    # -- checkpoints ---------------------------------------------------

    def checkpoint_path(self, version: int) -> Path:
        return self.checkpoint_dir / f"v{version:05d}.bin"

    def save_checkpoint(self, version: int) -> bytes:
        blob = params_to_bytes(self.mcfg, self.params)
        path = self.checkpoint_path(version)
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(blob)
            tmp.rename(path)
        return blob

    def generation_version(self, step: int) -> int:
        """Checkpoint version rollouts for this step are generated from:
        async_level steps behind the weights being updated."""
        return max(0, step - 1 - self.tcfg.async_level)

    # -- batch conversion ----------------------------------------------

    def _items_for(self, step: int, groups: list[GroupData],
                   scoring_params: PolicyParams) -> list[SequenceItem]:
        items = []
        for g in groups:
            base = self.dataset[g.task_id]
            prompt = list(task_for_step(base, step, self.budgets).prompt_tokens)
            for rec in g.records:
                logp, _ = sequence_logprobs(scoring_params, self.mcfg, prompt,
                                            rec.output_tokens)
                ref_logp, _ = sequence_logprobs(self.ref_params, self.mcfg,
                                                prompt, rec.output_tokens)
                items.append(SequenceItem(
                    prompt=prompt, output=rec.output_tokens,
                    advantage=rec.advantage, old_logp=logp,
                    ref_logp=ref_logp))
        return items

    # -- the update ------------------------------------------------------

    def train_step(self, step: int, batch: list[GroupData],
                   all_groups: list[GroupData], degenerate: int,
                   version_used: int) -> list[dict]:
        """Run micro_steps optimizer updates over one rollout batch."""
        task_all, pen_all = reward_summary(all_groups)
        task_batch, pen_batch = reward_summary(batch)
        try:
            items = self._items_for(step, batch, self.params)
        except ValueError as e:
            raise TrainHalt(f"bad batch at step {step}: {e}") from e

        n_micro = max(1, self.tcfg.micro_steps)
        per = max(1, math.ceil(len(items) / n_micro))
        slices = [items[i * per:(i + 1) * per] for i in range(n_micro)]
        rows = []
        for micro, chunk in enumerate(slices):
            if not chunk:
                continue
            if self.tcfg.recompute_old_per_micro_step and micro > 0:
                for it in chunk:
                    it.old_logp, _ = sequence_logprobs(
                        self.params, self.mcfg, it.prompt, it.output)
            try:
                result = gradient(self.params, self.mcfg, chunk, self.tcfg)
            except NumericError as e:
                self.save_checkpoint_emergency(step)
                raise TrainHalt(f"numeric failure at step {step}: {e}") from e
            lr = self.optimizer.step(self.params, result.grads)
            row = {
                "step": step, "micro_step": micro,
                "loss": result.stats.loss,
                "grad_norm": result.pre_clip_norm,
                "clip_fraction": result.stats.clip_fraction,
                "entropy": result.stats.mean_entropy,
                "kl": result.stats.mean_kl,
                "batch_task_reward": task_batch,
                "batch_length_penalty": pen_batch,
                "task_reward_all": task_all,
                "length_penalty_all": pen_all,
                "lr": lr,
                "consumed_groups": len(batch),
                "degenerate_discarded": degenerate,
                "version_used": version_used,
            }
            if not all(math.isfinite(v) for k, v in row.items()
                       if isinstance(v, float)):
                self.save_checkpoint_emergency(step)
                raise TrainHalt(f"non-finite metric at step {step}")
            self.metrics.append(row)
            rows.append(row)
        return rows

    def save_checkpoint_emergency(self, step: int) -> None:
        path = self.checkpoint_dir / f"halt-step{step}.bin"
        path.write_bytes(params_to_bytes(self.mcfg, self.params))
