"""Offline difficulty filtering by pass@k.

Tasks the reference policy always solves teach nothing; tasks it never
solves give no gradient signal either. Filtering keeps the band in
between (default: 1 to 4 successes out of 8 attempts).
"""

from __future__ import annotations

from ..config import ModelConfig
from ..policy import PolicyParams, sample_completions
from ..prng import SplitMix64
from .dataset import Task
from .rewards import verify


def pass_counts(tasks: list[Task], params: PolicyParams, mcfg: ModelConfig,
                k: int, rng_seed: int, temperature: float = 1.0) -> list[int]:
    """Successes out of k attempts per task, deterministic in rng_seed.

    Attempt j of task i draws from substream i*k+j of the seed, so the
    counts do not depend on batching or task order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    base = SplitMix64(rng_seed)
    prompts, rngs = [], []
    for i, task in enumerate(tasks):
        for j in range(k):
            prompts.append(list(task.prompt_tokens))
            rngs.append(base.substream(i * k + j))
    outputs = sample_completions(params, mcfg, prompts, rngs, temperature)
    counts = []
    for i, task in enumerate(tasks):
        chunk = outputs[i * k:(i + 1) * k]
        counts.append(sum(verify(task, out) for out in chunk))
    return counts


def offline_filter(tasks: list[Task], params: PolicyParams, mcfg: ModelConfig,
                   k: int = 8, low: float = 0.125, high: float = 0.5,
                   rng_seed: int = 0, temperature: float = 1.0) -> list[Task]:
    """Keep tasks whose pass@k count c satisfies low*k <= c <= high*k."""
    counts = pass_counts(tasks, params, mcfg, k, rng_seed, temperature)
    return [t for t, c in zip(tasks, counts) if low * k <= c <= high * k]
