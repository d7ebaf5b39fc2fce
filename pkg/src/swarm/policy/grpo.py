"""Group-relative policy optimization math with two-sided ratio clipping.

The per-token surrogate is

    term = min( min(rho, delta) * A ,  clip(rho, 1-eps, 1+eps) * A )

where rho is the new/old token probability ratio. The inner min is the
second side: without it, a token with negative advantage and a huge
ratio contributes an arbitrarily large loss term, which at scale shows
up as gradient-norm spikes. delta must sit above 1+eps so that moving
away from bad rollouts is still rewarded, just boundedly.

The loss is token-level: one mean over every token in the rollout
batch, not a per-sample mean of means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig


class NumericError(ArithmeticError):
    """Non-finite value in the optimization path; training must halt."""


@dataclass
class ObjectiveStats:
    loss: float
    clip_fraction: float
    mean_entropy: float
    mean_kl: float
    terms: np.ndarray = field(repr=False, default=None)


def compute_advantages(rewards: np.ndarray, adv_eps: float = 1e-6,
                       norm: str = "std") -> np.ndarray:
    """Group-relative advantages for one prompt's completions.

    Mean-centered, optionally divided by the population std (guarded by
    adv_eps). A group whose rewards are all identical carries no signal
    and returns exact zeros without touching the divisor.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need a 1-d group of at least 2 rewards")
    if not np.isfinite(r).all():
        raise NumericError("non-finite reward in group")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    centered = r - r.mean()
    if norm == "mean":
        return centered
    return centered / (r.std() + adv_eps)


def kl_estimate(new_logp: np.ndarray, ref_logp: np.ndarray) -> np.ndarray:
    """Per-token k = exp(ref-new) - (ref-new) - 1; nonnegative, zero iff equal."""
    d = np.asarray(ref_logp, dtype=np.float64) - np.asarray(new_logp, dtype=np.float64)
    return np.exp(d) - d - 1.0


def clipped_terms(ratio: np.ndarray, adv: np.ndarray, cfg: TrainConfig,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Per-token surrogate terms and the mask of tokens where clipping
    (either side) or the ratio upper bound changed the raw value rho*A."""
    delta = cfg.delta_or_inf
    lo, hi = 1.0 - cfg.epsilon, 1.0 + cfg.epsilon
    bounded = np.minimum(ratio, delta) * adv
    clipped = np.clip(ratio, lo, hi) * adv
    terms = np.minimum(bounded, clipped)
    changed = np.where(
        adv > 0,
        ratio > hi,
        (adv < 0) & ((ratio < lo) | (ratio > delta)),
    )
    return terms, changed


def grpo_objective(new_logp: np.ndarray, old_logp: np.ndarray,
                   ref_logp: np.ndarray, adv: np.ndarray, cfg: TrainConfig,
                   entropy: np.ndarray | None = None) -> ObjectiveStats:
    """Scalar loss and diagnostics over a flat, token-aligned batch.

    All inputs are per-token arrays of equal length covering the whole
    rollout batch. ``entropy`` is the full-distribution entropy at each
    position; it cannot be recovered from chosen-token log-probs, so
    callers that want the entropy bonus must supply it (the gradient
    pass does). Raises NumericError on any non-finite input.
    """
    arrays = [np.asarray(a, dtype=np.float64)
              for a in (new_logp, old_logp, ref_logp, adv)]
    if entropy is not None:
        arrays.append(np.asarray(entropy, dtype=np.float64))
    for a in arrays:
        if not np.isfinite(a).all():
            raise NumericError("non-finite input to objective")
    new_lp, old_lp, ref_lp, advs = arrays[:4]
    if not (new_lp.shape == old_lp.shape == ref_lp.shape == advs.shape):
        raise ValueError("misaligned token arrays")
    if new_lp.size == 0:
        raise ValueError("empty batch")

    with np.errstate(over="ignore"):
        ratio = np.exp(new_lp - old_lp)
    if not np.isfinite(ratio).all():
        raise NumericError("token probability ratio overflow")
    terms, changed = clipped_terms(ratio, advs, cfg)
    kl = kl_estimate(new_lp, ref_lp)
    ent = arrays[4] if entropy is not None else np.zeros_like(new_lp)

    loss = (-terms.mean()
            + cfg.kl_coef * kl.mean()
            - cfg.entropy_coef * ent.mean())
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return ObjectiveStats(
        loss=float(loss),
        clip_fraction=float(changed.mean()),
        mean_entropy=float(ent.mean()),
        mean_kl=float(kl.mean()),
        terms=terms,
    )
