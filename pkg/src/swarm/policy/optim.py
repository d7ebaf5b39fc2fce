"""Plain SGD with linear warmup.

The toy policy needs nothing fancier, and a stateless update keeps
checkpoint publishing trivial (params are the whole state).
"""

from __future__ import annotations

from ..config import TrainConfig
from .model import PolicyParams


class WarmupSGD:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.steps_taken = 0

    def current_lr(self) -> float:
        """LR for the upcoming step; ramps linearly over warmup_steps."""
        w = max(1, self.cfg.warmup_steps)
        return self.cfg.lr * min(1.0, (self.steps_taken + 1) / w)

    def step(self, params: PolicyParams, grads: PolicyParams) -> float:
        lr = self.current_lr()
        params.add_scaled_(grads, -lr)
        self.steps_taken += 1
        return lr
