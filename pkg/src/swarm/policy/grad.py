"""Analytic gradient of the clipped objective through the toy policy.

Backprop is hand-written against the exact forward pass in
``model.py``; tests hold it to central finite differences at 1e-4
relative error, so any change to the forward math must be mirrored
here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ModelConfig, TrainConfig
from .grpo import NumericError, ObjectiveStats, clipped_terms, grpo_objective
from .model import PolicyParams, context_rows, hidden_and_logp


@dataclass
class SequenceItem:
    """One completion with its fixed (non-differentiated) references."""

    prompt: list[int]
    output: list[int]
    advantage: float
    old_logp: np.ndarray
    ref_logp: np.ndarray


@dataclass
class GradResult:
    grads: PolicyParams
    stats: ObjectiveStats
    pre_clip_norm: float


def _forward_batch(params: PolicyParams, mcfg: ModelConfig,
                   items: list[SequenceItem]):
    """Shared forward pass; keeps per-sequence intermediates for backprop."""
    per_seq = []
    new_lp, old_lp, ref_lp, advs, ents = [], [], [], [], []
    for it in items:
        if not it.output:
            continue
        ctx = context_rows(mcfg, it.prompt, it.output)
        x = params.embed[ctx].reshape(ctx.shape[0], mcfg.context_dim)
        h = np.tanh(x @ params.hidden_w + params.hidden_b)
        z = h @ params.out_w + params.out_b
        shifted = z - z.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        y = np.asarray(it.output)
        chosen = logp[np.arange(len(y)), y]
        ent = -(p * logp).sum(axis=1)
        per_seq.append((it, ctx, x, h, p, logp, ent, chosen))
        new_lp.append(chosen)
        old_lp.append(np.asarray(it.old_logp, dtype=np.float64))
        ref_lp.append(np.asarray(it.ref_logp, dtype=np.float64))
        advs.append(np.full(len(y), it.advantage))
        ents.append(ent)
    if not per_seq:
        raise ValueError("batch has no tokens")
    flat = tuple(np.concatenate(a) for a in (new_lp, old_lp, ref_lp, advs, ents))
    return per_seq, flat


def batch_loss(params: PolicyParams, mcfg: ModelConfig,
               items: list[SequenceItem], tcfg: TrainConfig) -> ObjectiveStats:
    """Objective over a batch of sequences (forward only)."""
    _, (new_lp, old_lp, ref_lp, advs, ents) = _forward_batch(params, mcfg, items)
    return grpo_objective(new_lp, old_lp, ref_lp, advs, tcfg, entropy=ents)


def gradient(params: PolicyParams, mcfg: ModelConfig,
             items: list[SequenceItem], tcfg: TrainConfig) -> GradResult:
    """Analytic gradient of batch_loss, global-norm clipped to grad_clip.

    Returns the clipped gradient together with the objective stats and
    the pre-clip global norm (the instability metric worth watching).
    """
    per_seq, (new_lp, old_lp, ref_lp, advs, ents) = _forward_batch(params, mcfg, items)
    stats = grpo_objective(new_lp, old_lp, ref_lp, advs, tcfg, entropy=ents)

    n = new_lp.size
    ratio = np.exp(new_lp - old_lp)
    delta = tcfg.delta_or_inf
    lo, hi = 1.0 - tcfg.epsilon, 1.0 + tcfg.epsilon
    bounded = np.minimum(ratio, delta) * advs
    clipped = np.clip(ratio, lo, hi) * advs
    d_bounded = np.where(ratio < delta, advs, 0.0)
    d_clipped = np.where((ratio > lo) & (ratio < hi), advs, 0.0)
    dterm_dratio = np.where(bounded <= clipped, d_bounded, d_clipped)
    # d/dnew of  -mean(term) + kl_coef*mean(kl);  dratio/dnew = ratio
    dnew = (-dterm_dratio * ratio + tcfg.kl_coef * (1.0 - np.exp(ref_lp - new_lp))) / n

    grads = params.zeros_like()
    offset = 0
    for it, ctx, x, h, p, logp, ent, chosen in per_seq:
        t = len(it.output)
        g = dnew[offset:offset + t]
        offset += t
        # chosen-logp path: dz = g * (onehot(y) - p)
        dz = -g[:, None] * p
        dz[np.arange(t), it.output] += g
        # entropy bonus enters the loss as -entropy_coef * mean(H)
        dz += (tcfg.entropy_coef / n) * p * (logp + ent[:, None])

        grads.out_w += h.T @ dz
        grads.out_b += dz.sum(axis=0)
        dh = dz @ params.out_w.T
        du = dh * (1.0 - h * h)
        grads.hidden_w += x.T @ du
        grads.hidden_b += du.sum(axis=0)
        dx = (du @ params.hidden_w.T).reshape(t, mcfg.window, mcfg.embed_dim)
        np.add.at(grads.embed, ctx, dx)

    pre_clip = grads.global_norm()
    if not np.isfinite(pre_clip):
        raise NumericError("non-finite gradient")
    if pre_clip > tcfg.grad_clip and pre_clip > 0:
        grads.scale_(tcfg.grad_clip / pre_clip)
    return GradResult(grads=grads, stats=stats, pre_clip_norm=pre_clip)
