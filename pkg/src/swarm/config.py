"""Model and training configuration.

Two presets ship with the package: ``toy`` is the default desk-scale
configuration every experiment and test uses; ``large`` records the
hyperparameters of a full-scale run of this recipe for reference. The
large preset is documentation -- nothing in this repository can train
at that scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict, replace


@dataclass(frozen=True)
class ModelConfig:
    """Shapes of the toy autoregressive policy."""

    vocab: int
    window: int          # context tokens fed to the policy (left-padded)
    embed_dim: int
    hidden_dim: int
    max_len: int         # hard cap on len(prompt) + len(output)
    eos_id: int
    pad_id: int

    def __post_init__(self):
        if self.vocab < 4:
            raise ValueError("vocab must be >= 4")
        if not (self.max_len >= self.window >= 1):
            raise ValueError("need max_len >= window >= 1")
        if self.eos_id == self.pad_id:
            raise ValueError("eos_id and pad_id must differ")
        if self.eos_id >= self.vocab or self.pad_id >= self.vocab:
            raise ValueError("special token ids must be < vocab")

    @property
    def context_dim(self) -> int:
        return self.window * self.embed_dim


@dataclass(frozen=True)
class TrainConfig:
    """Every tunable knob of the optimization and scheduling recipe."""

    epsilon: float = 0.2          # ratio-clip half-width
    delta: float | None = 4.0     # upper ratio bound for negative advantages; None disables
    alpha: float = 0.01           # length-penalty weight per token of deviation
    kl_coef: float = 0.001
    entropy_coef: float = 1e-3
    lr: float = 5e-2
    warmup_steps: int = 25        # linear warmup, counted in optimizer (micro) steps
    grad_clip: float = 0.5        # max global gradient norm
    group_size: int = 8           # completions per prompt
    prompts_per_step: int = 16    # non-degenerate groups consumed per rollout step
    micro_steps: int = 4          # optimizer steps per rollout step
    async_level: int = 2          # staleness (in steps) of the generating policy
    adv_eps: float = 1e-6         # std guard in advantage normalization
    adv_norm: str = "std"         # "std" or "mean" (mean-subtraction only)
    kl_reference: str = "initial"  # "initial" or "last_broadcast"
    recompute_old_per_micro_step: bool = False
    temperature: float = 1.0
    staleness_window: int = 5     # reject rollouts older than this many versions
    eos_prob_floor: float = 0.1   # eos below this probability neither samples nor validates
    init_scale: float = 0.1      # weight init std; soft distributions at start
    init_eos_bias: float = 1.1   # initial eos logit, puts P(eos) above the floor

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")
        if self.delta is not None and not self.delta > 1.0 + self.epsilon:
            raise ValueError("delta must exceed 1 + epsilon")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")
        if self.async_level < 0:
            raise ValueError("async_level must be >= 0")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.adv_norm not in ("std", "mean"):
            raise ValueError("adv_norm must be 'std' or 'mean'")
        if self.kl_reference not in ("initial", "last_broadcast"):
            raise ValueError("kl_reference must be 'initial' or 'last_broadcast'")

    @property
    def delta_or_inf(self) -> float:
        return math.inf if self.delta is None else self.delta

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


# Vocabulary layout of the toy arithmetic language; see swarm.tasks.
TOY_MODEL = ModelConfig(
    vocab=20, window=44, embed_dim=6, hidden_dim=64,
    max_len=44, eos_id=14, pad_id=15,
)

TOY_TRAIN = TrainConfig()

# Reference hyperparameters of the full-scale recipe this package scales
# down from: 256 prompts x 16 completions, 8 optimizer steps over the
# rollout batch, lr 3e-7 with 25 warmup steps, aggressive 0.1 grad clip,
# alpha 3e-4 against thinking budgets in the thousands of tokens.
LARGE_TRAIN = TrainConfig(
    epsilon=0.2, delta=4.0, alpha=0.0003, kl_coef=0.001, entropy_coef=1e-4,
    lr=3e-7, warmup_steps=25, grad_clip=0.1, group_size=16,
    prompts_per_step=256, micro_steps=8, async_level=2,
)
