from .model import (
    PolicyParams,
    init_params,
    pad_context,
    forward,
    sequence_logprobs,
    sample_completions,
    params_to_bytes,
    params_from_bytes,
)
from .grpo import (
    NumericError,
    ObjectiveStats,
    compute_advantages,
    grpo_objective,
    kl_estimate,
)
from .grad import SequenceItem, batch_loss, gradient
from .optim import WarmupSGD

__all__ = [
    "PolicyParams", "init_params", "pad_context", "forward",
    "sequence_logprobs", "sample_completions", "params_to_bytes",
    "params_from_bytes", "NumericError", "ObjectiveStats",
    "compute_advantages", "grpo_objective", "kl_estimate",
    "SequenceItem", "batch_loss", "gradient", "WarmupSGD",
]
