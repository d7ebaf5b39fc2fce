"""Binary task rewards plus the length penalty.

Rewards are strictly 0/1 -- no partial credit, which keeps the reward
un-hackable by construction. The total reward subtracts a length
penalty proportional to how far the completion strays from the task's
thinking budget:

    r_total = r_task - alpha * |l_target - l_y|
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataset import Task
from .vocab import DELIM_ID, EOS_ID


@dataclass(frozen=True)
class RewardBreakdown:
    r_task: int            # 0 or 1
    length_penalty: float  # alpha * |l_target - l_y|, >= 0
    r_total: float


def verify(task: Task, output: list[int]) -> int:
    """1 iff the span after the last '=' exactly equals the target.

    A trailing eos is not part of the answer. Malformed output of any
    shape scores 0; this function never raises.
    """
    try:
        toks = list(output)
        if toks and toks[-1] == EOS_ID:
            toks = toks[:-1]
        if DELIM_ID not in toks:
            return 0
        last = len(toks) - 1 - toks[::-1].index(DELIM_ID)
        span = toks[last + 1:]
        return 1 if tuple(span) == tuple(task.target_answer) else 0
    except Exception:
        return 0


def total_reward(task: Task, output: list[int], alpha: float) -> RewardBreakdown:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    r_task = verify(task, output)
    penalty = alpha * abs(task.l_target - len(output))
    return RewardBreakdown(r_task=r_task, length_penalty=penalty,
                           r_total=r_task - penalty)
