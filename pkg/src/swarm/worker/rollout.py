"""Rollout generation on untrusted nodes.

Everything a worker submits must be re-derivable by an auditor, so all
randomness flows from one public formula:

    seed = addr_int * step + submission_index   (mod 2^64)

addr_int is the little-endian integer of the first 8 bytes of the
node's public key. Prompt selection uses substream 0 of that seed and
token sampling for group g, member i uses substream 1 + g*G + i; the
prompt substream is what validators replay.

Commitments chain SHA-256 over the hidden activations of every
32-token interval (rounded to 6 decimals first, guarding against
last-ulp drift between legal summation orders). A validator's
teacher-forced prefill reproduces them exactly; a stale checkpoint, a
different model, or tampered tokens cannot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ModelConfig
from ..keys import address_int
from ..policy import compute_advantages, sample_completions, sequence_logprobs
from ..prng import MASK64, SplitMix64
from ..tasks import Task, total_reward
from ..wire import ZERO_DIGEST, sha256

COMMIT_INTERVAL = 32


def derive_seed(node_address: str, step: int, submission_index: int) -> int:
    return (address_int(node_address) * step + submission_index) & MASK64


def select_prompts(dataset_size: int, seed: int, count: int) -> list[int]:
    """Task indices for one submission; order is part of the contract."""
    rng = SplitMix64(seed).substream(0)
    return [rng.next_below(dataset_size) for _ in range(count)]


def sampling_stream(seed: int, group_index: int, member_index: int,
                    group_size: int) -> SplitMix64:
    return SplitMix64(seed).substream(1 + group_index * group_size + member_index)


def build_commitments(hidden: np.ndarray, k: int = COMMIT_INTERVAL) -> list[bytes]:
    """Chained digests over k-position blocks of hidden activations.

    digest_j = SHA-256(digest_{j-1} || round(hidden[j*k:(j+1)*k], 6) as
    little-endian float64); digest_{-1} is 32 zero bytes. The final
    partial block is included, so a T-position sequence yields
    ceil(T/k) digests.
    """
    if k < 1:
        raise ValueError("interval must be >= 1")
    hidden = np.asarray(hidden, dtype=np.float64)
    digests = []
    prev = ZERO_DIGEST
    for start in range(0, max(len(hidden), 1), k):
        block = np.round(hidden[start:start + k], 6)
        prev = sha256(prev + np.ascontiguousarray(block, dtype="<f8").tobytes())
        digests.append(prev)
    return digests


@dataclass
class Completion:
    """One sampled completion, rescored through the canonical prefill."""

    output_tokens: list[int]
    chosen_probs: np.ndarray
    commitments: list[bytes]
    eos_prob_at_end: float | None
    r_task: int
    r_total: float
    length_penalty: float
    advantage: float = 0.0


def generate_group(params, mcfg: ModelConfig, task: Task, group_size: int,
                   temperature: float, seed: int, group_index: int,
                   alpha: float, adv_eps: float = 1e-6,
                   adv_norm: str = "std",
                   eos_floor: float | None = None) -> list[Completion]:
    """Sample a group for one prompt and score it locally.

    Sampling and scoring are split on purpose: tokens are drawn from
    the fast batched sampler, then every completion is rescored with
    sequence_logprobs -- the exact function a validator runs -- so the
    recorded probabilities, hidden states and commitments are the
    prefill's, bit for bit.
    """
    prompt = list(task.prompt_tokens)
    rngs = [sampling_stream(seed, group_index, i, group_size)
            for i in range(group_size)]
    outputs = sample_completions(params, mcfg, [prompt] * group_size,
                                 rngs, temperature, eos_floor=eos_floor)
    completions = []
    for out in outputs:
        logp, hidden = sequence_logprobs(params, mcfg, prompt, out)
        probs = np.exp(logp)
        eos_p = float(probs[-1]) if out and out[-1] == mcfg.eos_id else None
        rb = total_reward(task, out, alpha)
        completions.append(Completion(
            output_tokens=out,
            chosen_probs=probs,
            commitments=build_commitments(hidden),
            eos_prob_at_end=eos_p,
            r_task=rb.r_task,
            r_total=rb.r_total,
            length_penalty=rb.length_penalty,
        ))
    advs = compute_advantages(
        np.array([c.r_total for c in completions]), adv_eps, adv_norm)
    for c, a in zip(completions, advs):
        c.advantage = float(a)
    return completions


def build_submission(params, mcfg: ModelConfig, dataset: list[Task],
                     node_address: str, step: int, submission_index: int,
                     checkpoint_version: int, *, prompts_per_file: int,
                     group_size: int, temperature: float, alpha: float,
                     budgets: tuple[int, ...], adv_eps: float = 1e-6,
                     adv_norm: str = "std", eos_floor: float | None = None):
    """One complete submission: seeded prompt selection, one group per
    prompt, records in (group, member) order. Returns a RolloutFile
    ready to sign."""
    from ..tasks import task_for_step
    from .files import RolloutFile, RolloutRecord

    seed = derive_seed(node_address, step, submission_index)
    picks = select_prompts(len(dataset), seed, prompts_per_file)
    records = []
    for g, task_idx in enumerate(picks):
        task = task_for_step(dataset[task_idx], step, budgets)
        group = generate_group(params, mcfg, task, group_size, temperature,
                               seed, g, alpha, adv_eps, adv_norm, eos_floor)
        for m, c in enumerate(group):
            records.append(RolloutRecord(
                node_address=node_address, step=step,
                submission_index=submission_index,
                task_id=task.task_id, group_index=g, member_index=m,
                checkpoint_version=checkpoint_version,
                output_tokens=c.output_tokens,
                chosen_probs=[float(p) for p in c.chosen_probs],
                commitments=[d.hex() for d in c.commitments],
                eos_prob_at_end=c.eos_prob_at_end,
                r_task=c.r_task, r_total=c.r_total, advantage=c.advantage,
            ))
    return RolloutFile(
        node_address=node_address, step=step,
        submission_index=submission_index,
        checkpoint_version=checkpoint_version, group_size=group_size,
        num_groups=prompts_per_file, commit_interval=COMMIT_INTERVAL,
        records=records,
    )
