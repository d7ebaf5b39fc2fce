from .checks import (
    CheckContext,
    Verdict,
    check_bounds,
    check_sampling,
    check_seed,
    check_termination,
    validate_file,
)

__all__ = [
    "CheckContext", "Verdict", "check_bounds", "check_sampling",
    "check_seed", "check_termination", "validate_file",
]
