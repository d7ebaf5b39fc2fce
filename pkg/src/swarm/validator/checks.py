"""Audit checks over uploaded rollout files.

A validator re-derives everything derivable from a file and rejects on
the first violation, running the cheap structural checks before the
prefill-heavy ones:

    schema -> seed -> bounds -> termination -> sampling -> commitment

No tokens are ever sampled here; every quantity comes from
teacher-forced prefill of the claimed checkpoint, which is why
validation is much cheaper than generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..config import ModelConfig
from ..policy import PolicyParams, compute_advantages, sequence_logprobs
from ..prng import SplitMix64, mix64
from ..tasks import Task, task_for_step, verify
from ..worker.files import RolloutFile, RolloutSchemaError, parse_rollout_file
from ..worker.rollout import build_commitments, derive_seed, select_prompts

CHECK_ORDER = ("schema", "seed", "bounds", "termination", "sampling", "commitment")


@dataclass
class Verdict:
    file_id: str
    result: str                      # "accept" | "reject"
    failed_check: str | None = None  # one of CHECK_ORDER when rejecting
    details: str = ""
    node_address: str | None = None
    step: int | None = None

    def to_record(self) -> dict:
        return {
            "file_id": self.file_id, "result": self.result,
            "failed_check": self.failed_check, "details": self.details,
            "node_address": self.node_address, "step": self.step,
        }


@dataclass
class CheckContext:
    mcfg: ModelConfig
    dataset: list[Task]
    alpha: float
    budgets: tuple[int, ...]
    group_size: int
    adv_eps: float = 1e-6
    adv_norm: str = "std"
    # sampling-check thresholds, tuned against the honest/adversarial
    # corpora: at vocab 20 honest picks below 0.005 are rare for any
    # policy (mass below p_low is at most 19*p_low), while tokens from
    # a substituted model recompute to ~1e-4 or less
    p_low: float = 0.005
    theta: float = 0.25
    min_sampling_len: int = 16
    eos_prob_floor: float = 0.1
    commit_q: float = 1.0            # fraction of records commitment-checked
    q_seed: int = 0
    # claimed checkpoint_version -> params, or None when unknown
    load_checkpoint: Callable[[int], PolicyParams | None] = lambda v: None
    tasks_by_id: dict = field(default=None, repr=False)

    def task(self, task_id: int) -> Task | None:
        if self.tasks_by_id is None:
            self.tasks_by_id = {t.task_id: t for t in self.dataset}
        return self.tasks_by_id.get(task_id)


def check_seed(file: RolloutFile, ctx: CheckContext) -> str | None:
    """Replay prompt selection; any id or ordering drift is a reject."""
    seed = derive_seed(file.node_address, file.step, file.submission_index)
    picks = select_prompts(len(ctx.dataset), seed, file.num_groups)
    expected = [ctx.dataset[i].task_id for i in picks]
    actual = [file.group(g)[0].task_id for g in range(file.num_groups)]
    if actual != expected:
        return f"task ids {actual} != seeded selection {expected}"
    return None


def check_bounds(file: RolloutFile, ctx: CheckContext) -> str | None:
    """Range checks plus exact recomputation of rewards and advantages."""
    a_max = math.sqrt(file.group_size)
    for g in range(file.num_groups):
        group = file.group(g)
        base = ctx.task(group[0].task_id)
        if base is None:
            return f"unknown task id {group[0].task_id}"
        task = task_for_step(base, file.step, ctx.budgets)
        for rec in group:
            if rec.r_task not in (0, 1):
                return f"r_task {rec.r_task} not binary"
            if not (-ctx.alpha * ctx.mcfg.max_len - 1e-12 <= rec.r_total <= 1.0 + 1e-12):
                return f"r_total {rec.r_total} out of bounds"
            if abs(rec.advantage) > a_max:
                return f"advantage {rec.advantage} exceeds sqrt(G)"
            true_r_task = verify(task, rec.output_tokens)
            if rec.r_task != true_r_task:
                return f"r_task {rec.r_task} != recomputed {true_r_task}"
            expect_total = rec.r_task - ctx.alpha * abs(
                task.l_target - len(rec.output_tokens))
            if rec.r_total != expect_total:
                return f"r_total {rec.r_total} != recomputed {expect_total}"
        advs = compute_advantages(np.array([r.r_total for r in group]),
                                  ctx.adv_eps, ctx.adv_norm)
        for rec, adv in zip(group, advs):
            if rec.advantage != float(adv):
                return f"advantage {rec.advantage} != recomputed {float(adv)}"
    return None


def check_termination(rec, recomputed_probs: np.ndarray, prompt_len: int,
                      ctx: CheckContext) -> str | None:
    """Sequence must hit max_len or end in a plausible eos."""
    if prompt_len + len(rec.output_tokens) >= ctx.mcfg.max_len:
        return None
    if rec.output_tokens[-1] != ctx.mcfg.eos_id:
        return "sequence neither reaches max_len nor ends with eos"
    p_eos = float(recomputed_probs[-1])
    if p_eos <= ctx.eos_prob_floor:
        return f"eos probability {p_eos:.4f} <= {ctx.eos_prob_floor}"
    return None


def check_sampling(rec, recomputed_probs: np.ndarray, ctx: CheckContext) -> str | None:
    """Honest ancestral sampling rarely picks very unlikely tokens; a
    pile of them means the tokens came from some other policy."""
    if len(rec.output_tokens) < ctx.min_sampling_len:
        return None
    frac = float(np.mean(recomputed_probs < ctx.p_low))
    if frac > ctx.theta:
        return (f"{frac:.2f} of tokens below p={ctx.p_low}"
                f" (threshold {ctx.theta})")
    return None


def _commit_sample(file: RolloutFile, ctx: CheckContext) -> set[int]:
    """Deterministic q-subsample of record indices to commitment-check."""
    if ctx.commit_q >= 1.0:
        return set(range(len(file.records)))
    rng = SplitMix64(mix64(ctx.q_seed ^ derive_seed(
        file.node_address, file.step, file.submission_index)))
    return {i for i in range(len(file.records)) if rng.next_float() < ctx.commit_q}


def validate_file(data: bytes, ctx: CheckContext,
                  expected_identity: tuple[str, int, int] | None = None) -> Verdict:
    """Run every check in cost order and produce a single verdict.

    expected_identity, when given, is the (address, step, submission)
    the file was uploaded under; a file signed by some other node or
    claiming a different slot is a schema reject.
    """
    try:
        file = parse_rollout_file(data)
    except RolloutSchemaError as e:
        return Verdict(file_id="unparseable", result="reject",
                       failed_check="schema", details=str(e))
    if expected_identity is not None and expected_identity != (
            file.node_address, file.step, file.submission_index):
        return Verdict(file_id=file.file_id, result="reject",
                       failed_check="schema",
                       details="file identity differs from upload slot",
                       node_address=file.node_address, step=file.step)
    if file.group_size != ctx.group_size:
        return Verdict(file_id=file.file_id, result="reject",
                       failed_check="schema",
                       details=f"group size {file.group_size} != {ctx.group_size}",
                       node_address=file.node_address, step=file.step)

    def reject(check: str, details: str) -> Verdict:
        return Verdict(file_id=file.file_id, result="reject",
                       failed_check=check, details=details,
                       node_address=file.node_address, step=file.step)

    if (why := check_seed(file, ctx)) is not None:
        return reject("seed", why)
    if (why := check_bounds(file, ctx)) is not None:
        return reject("bounds", why)

    params = ctx.load_checkpoint(file.checkpoint_version)
    if params is None:
        return reject("commitment",
                      f"unknown checkpoint {file.checkpoint_version}")

    commit_targets = _commit_sample(file, ctx)
    for idx, rec in enumerate(file.records):
        base = ctx.task(rec.task_id)
        task = task_for_step(base, file.step, ctx.budgets)
        prompt = list(task.prompt_tokens)
        try:
            logp, hidden = sequence_logprobs(params, ctx.mcfg, prompt,
                                             rec.output_tokens)
        except ValueError as e:
            return reject("schema", f"record {idx}: {e}")
        probs = np.exp(logp)
        if (why := check_termination(rec, probs, len(prompt), ctx)) is not None:
            return reject("termination", f"record {idx}: {why}")
        if (why := check_sampling(rec, probs, ctx)) is not None:
            return reject("sampling", f"record {idx}: {why}")
        if idx in commit_targets:
            digests = [d.hex() for d in
                       build_commitments(hidden, file.commit_interval)]
            if digests != rec.commitments:
                return reject("commitment", f"record {idx}: digest mismatch")
    return Verdict(file_id=file.file_id, result="accept",
                   node_address=file.node_address, step=file.step)
