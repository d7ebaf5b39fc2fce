"""Toy autoregressive policy.

One hidden tanh layer over the one-hot embeddings of a fixed-width
context window, all in float64:

    x = concat(embed[c_0], ..., embed[c_{W-1}])      # context, left-padded
    h = tanh(x @ hidden_w + hidden_b)
    p = softmax(h @ out_w + out_b)

Everything here is a pure function of (params, tokens). Workers,
validators and the trainer all score sequences through
``sequence_logprobs``, which is the canonical teacher-forced pass:
running it twice on the same inputs, in any process on the same
machine, yields bit-identical log-probs and hidden states. Activation
commitments and audit checks rely on that.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..config import ModelConfig
from ..prng import SplitMix64

PARAM_FIELDS = ("embed", "hidden_w", "hidden_b", "out_w", "out_b")


@dataclass
class PolicyParams:
    """All weights of the policy, float64 throughout."""

    embed: np.ndarray     # (V, E)
    hidden_w: np.ndarray  # (W*E, H)
    hidden_b: np.ndarray  # (H,)
    out_w: np.ndarray     # (H, V)
    out_b: np.ndarray     # (V,)

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, f) for f in PARAM_FIELDS)

    def copy(self) -> "PolicyParams":
        return PolicyParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(*(np.zeros_like(a) for a in self.arrays()))

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def scale_(self, factor: float) -> None:
        for a in self.arrays():
            a *= factor

    def add_scaled_(self, other: "PolicyParams", factor: float) -> None:
        for a, b in zip(self.arrays(), other.arrays()):
            a += factor * b

    def validate(self, cfg: ModelConfig) -> None:
        v, e = self.embed.shape
        if v != cfg.vocab or e != cfg.embed_dim:
            raise ValueError("embed shape inconsistent with model config")
        if self.hidden_w.shape != (cfg.context_dim, cfg.hidden_dim):
            raise ValueError("hidden_w shape inconsistent with model config")
        if self.hidden_b.shape != (cfg.hidden_dim,):
            raise ValueError("hidden_b shape inconsistent with model config")
        if self.out_w.shape != (cfg.hidden_dim, cfg.vocab):
            raise ValueError("out_w shape inconsistent with model config")
        if self.out_b.shape != (cfg.vocab,):
            raise ValueError("out_b shape inconsistent with model config")
        if not all(np.isfinite(a).all() for a in self.arrays()):
            raise ValueError("params contain non-finite entries")


def init_params(cfg: ModelConfig, seed: int, scale: float = 0.3,
                eos_bias: float = 0.0) -> PolicyParams:
    """Gaussian init. A positive eos_bias lifts the initial eos
    probability above the termination-check floor so untrained policies
    produce finite, varied-length sequences."""
    rng = np.random.default_rng(seed)

    def g(*shape):
        return rng.normal(0.0, scale, size=shape)

    params = PolicyParams(
        embed=g(cfg.vocab, cfg.embed_dim),
        hidden_w=g(cfg.context_dim, cfg.hidden_dim),
        hidden_b=np.zeros(cfg.hidden_dim),
        out_w=g(cfg.hidden_dim, cfg.vocab),
        out_b=np.zeros(cfg.vocab),
    )
    params.out_b[cfg.eos_id] = eos_bias
    return params


def zero_params(cfg: ModelConfig) -> PolicyParams:
    return PolicyParams(
        embed=np.zeros((cfg.vocab, cfg.embed_dim)),
        hidden_w=np.zeros((cfg.context_dim, cfg.hidden_dim)),
        hidden_b=np.zeros(cfg.hidden_dim),
        out_w=np.zeros((cfg.hidden_dim, cfg.vocab)),
        out_b=np.zeros(cfg.vocab),
    )


def _check_tokens(cfg: ModelConfig, tokens) -> None:
    for t in tokens:
        if not (0 <= t < cfg.vocab):
            raise ValueError(f"token id {t} out of range for vocab {cfg.vocab}")


def pad_context(cfg: ModelConfig, tokens: list[int]) -> np.ndarray:
    """Last ``window`` tokens, left-padded with pad_id to exactly window."""
    tail = tokens[-cfg.window:]
    ctx = np.full(cfg.window, cfg.pad_id, dtype=np.int64)
    if tail:
        ctx[cfg.window - len(tail):] = tail
    return ctx


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def hidden_and_logp(params: PolicyParams, cfg: ModelConfig,
                    ctx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hidden activations (N, H) and log-prob rows (N, V) for ctx (N, W)."""
    x = params.embed[ctx].reshape(ctx.shape[0], cfg.context_dim)
    h = np.tanh(x @ params.hidden_w + params.hidden_b)
    z = h @ params.out_w + params.out_b
    return h, _log_softmax(z)


def forward(params: PolicyParams, cfg: ModelConfig, context: list[int]) -> np.ndarray:
    """Next-token distribution given the tokens so far."""
    _check_tokens(cfg, context)
    ctx = pad_context(cfg, list(context))[None, :]
    _, logp = hidden_and_logp(params, cfg, ctx)
    return np.exp(logp[0])


def context_rows(cfg: ModelConfig, prompt: list[int], output: list[int]) -> np.ndarray:
    """Context window per output position: row t sees prompt + output[:t]."""
    p, t = len(prompt), len(output)
    full = np.full(cfg.window + p + t, cfg.pad_id, dtype=np.int64)
    full[cfg.window:cfg.window + p] = prompt
    full[cfg.window + p:] = output
    windows = np.lib.stride_tricks.sliding_window_view(full, cfg.window)
    return np.ascontiguousarray(windows[p:p + t])


def sequence_logprobs(params: PolicyParams, cfg: ModelConfig,
                      prompt: list[int], output: list[int],
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forced log-probs of the chosen tokens, plus hidden states.

    Returns (logp (T,), hidden (T, H)); hidden row t is the activation
    that produced the distribution token t was drawn from, the quantity
    interval commitments are hashed over.
    """
    if len(prompt) + len(output) > cfg.max_len:
        raise ValueError("sequence exceeds max_len")
    _check_tokens(cfg, prompt)
    _check_tokens(cfg, output)
    if not output:
        return np.zeros(0), np.zeros((0, cfg.hidden_dim))
    ctx = context_rows(cfg, prompt, output)
    h, logp = hidden_and_logp(params, cfg, ctx)
    chosen = logp[np.arange(len(output)), output]
    return chosen, h


def sample_completions(params: PolicyParams, cfg: ModelConfig,
                       prompts: list[list[int]], rngs: list[SplitMix64],
                       temperature: float = 1.0,
                       eos_floor: float | None = None) -> list[list[int]]:
    """Sample one completion per prompt, all sequences advancing in lockstep.

    Each sequence draws from its own PRNG stream, so results do not
    depend on how the batch is grouped. Generation stops at eos_id or
    when prompt+output hits max_len.

    With eos_floor set, eos is masked out of the draw at positions where
    its probability is at or below the floor: an auditor rejects
    low-probability eos terminations, so an honest worker never emits
    one. The tiny margin keeps the decision stable against last-ulp
    differences between this batched pass and the auditor's prefill.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = len(prompts)
    for p in prompts:
        _check_tokens(cfg, p)
    ctx = np.stack([pad_context(cfg, p) for p in prompts])
    budget = np.array([cfg.max_len - len(p) for p in prompts])
    outputs: list[list[int]] = [[] for _ in range(n)]
    active = budget > 0
    while active.any():
        idx = np.flatnonzero(active)
        x = params.embed[ctx[idx]].reshape(len(idx), cfg.context_dim)
        h = np.tanh(x @ params.hidden_w + params.hidden_b)
        z = h @ params.out_w + params.out_b
        raw = np.exp(_log_softmax(z))
        if temperature != 1.0:
            probs = np.exp(_log_softmax(z / temperature))
        else:
            probs = raw.copy()
        if eos_floor is not None:
            masked = raw[:, cfg.eos_id] <= eos_floor * (1.0 + 1e-9)
            if masked.any():
                probs[masked, cfg.eos_id] = 0.0
                probs[masked] /= probs[masked].sum(axis=1, keepdims=True)
        cum = np.cumsum(probs, axis=1)
        for row, i in enumerate(idx):
            u = rngs[i].next_float()
            tok = int(np.searchsorted(cum[row], u, side="right"))
            tok = min(tok, cfg.vocab - 1)
            outputs[i].append(tok)
            ctx[i, :-1] = ctx[i, 1:]
            ctx[i, -1] = tok
            if tok == cfg.eos_id or len(outputs[i]) >= budget[i]:
                active[i] = False
    return outputs


def params_to_bytes(cfg: ModelConfig, params: PolicyParams) -> bytes:
    """Canonical checkpoint encoding.

    Seven little-endian uint32 (vocab, window, embed_dim, hidden_dim,
    max_len, eos_id, pad_id) followed by the five weight arrays as
    little-endian float64, row-major, in declaration order. Identical
    params always produce identical bytes; every checkpoint digest in
    the system is SHA-256 over this encoding.
    """
    params.validate(cfg)
    head = struct.pack(
        "<7I", cfg.vocab, cfg.window, cfg.embed_dim, cfg.hidden_dim,
        cfg.max_len, cfg.eos_id, cfg.pad_id,
    )
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return head + body


def params_from_bytes(data: bytes) -> tuple[ModelConfig, PolicyParams]:
    if len(data) < 28:
        raise ValueError("checkpoint too short")
    v, w, e, hdim, lmax, eos, pad = struct.unpack("<7I", data[:28])
    cfg = ModelConfig(vocab=v, window=w, embed_dim=e, hidden_dim=hdim,
                      max_len=lmax, eos_id=eos, pad_id=pad)
    shapes = [(v, e), (w * e, hdim), (hdim,), (hdim, v), (v,)]
    need = 28 + sum(int(np.prod(s)) * 8 for s in shapes)
    if len(data) != need:
        raise ValueError(f"checkpoint length {len(data)} != expected {need}")
    off = 28
    arrays = []
    for s in shapes:
        cnt = int(np.prod(s))
        arr = np.frombuffer(data, dtype="<f8", count=cnt, offset=off).reshape(s).copy()
        arrays.append(arr)
        off += cnt * 8
    params = PolicyParams(*arrays)
    params.validate(cfg)
    return cfg, params
