from .rollout import (
    COMMIT_INTERVAL,
    build_commitments,
    build_submission,
    derive_seed,
    generate_group,
    sampling_stream,
    select_prompts,
)
from .files import (
    RolloutFile,
    RolloutRecord,
    RolloutSchemaError,
    build_rollout_file,
    parse_rollout_file,
)

__all__ = [
    "COMMIT_INTERVAL", "build_commitments", "build_submission", "derive_seed", "generate_group",
    "sampling_stream", "select_prompts", "RolloutFile", "RolloutRecord",
    "RolloutSchemaError", "build_rollout_file", "parse_rollout_file",
]
