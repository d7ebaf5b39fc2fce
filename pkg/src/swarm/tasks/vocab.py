"""The 20-token arithmetic language the toy policy speaks.

    0..9   digits
    10     '+'      11  '-'      12  '*'
    13     '='      answer delimiter
    14     eos      15  pad
    16..19 thinking-budget markers, one per configured target length

A prompt is [a, op, b, budget]; a well-formed completion is any run of
thinking tokens, then '=', then the answer digits, then eos.
"""

from __future__ import annotations

DIGITS = tuple(range(10))
PLUS_ID, MINUS_ID, TIMES_ID = 10, 11, 12
DELIM_ID = 13
EOS_ID = 14
PAD_ID = 15
BUDGET_BASE = 16

OP_TOKENS = {"+": PLUS_ID, "-": MINUS_ID, "*": TIMES_ID}
_OP_CHARS = {v: k for k, v in OP_TOKENS.items()}

DEFAULT_BUDGETS = (8, 16, 24, 32)


def budget_token(budget: int, budgets: tuple[int, ...] = DEFAULT_BUDGETS) -> int:
    return BUDGET_BASE + budgets.index(budget)


def render_tokens(tokens: list[int], budgets: tuple[int, ...] = DEFAULT_BUDGETS) -> str:
    """Human-readable form for logs: '3+4<16>..=7.'"""
    out = []
    for t in tokens:
        if t < 10:
            out.append(str(t))
        elif t in _OP_CHARS:
            out.append(_OP_CHARS[t])
        elif t == DELIM_ID:
            out.append("=")
        elif t == EOS_ID:
            out.append(".")
        elif t == PAD_ID:
            out.append("_")
        elif BUDGET_BASE <= t < BUDGET_BASE + len(budgets):
            out.append(f"<{budgets[t - BUDGET_BASE]}>")
        else:
            out.append(f"?{t}")
    return "".join(out)
