from .vocab import (
    DELIM_ID,
    EOS_ID,
    PAD_ID,
    OP_TOKENS,
    budget_token,
    render_tokens,
)
from .dataset import (
    Task,
    build_task,
    generate_dataset,
    load_dataset,
    save_dataset,
    task_for_step,
)
from .rewards import RewardBreakdown, total_reward, verify
from .filtering import offline_filter, pass_counts

__all__ = [
    "DELIM_ID", "EOS_ID", "PAD_ID", "OP_TOKENS", "budget_token",
    "render_tokens", "Task", "build_task", "generate_dataset",
    "load_dataset", "save_dataset", "task_for_step", "RewardBreakdown",
    "total_reward", "verify", "offline_filter", "pass_counts",
]
