"""Synthetic verifiable tasks: single-digit modular arithmetic.

Each task asks for (a op b) mod 10 and carries a thinking budget. The
budget is not a property of the task alone: at rollout time it is
re-drawn deterministically from (task_id, step), so the same problem is
trained at several target lengths. ``task_for_step`` is that pure
function; workers and validators must agree on it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..prng import SplitMix64, mix64
from ..wire import canonical_json
from .vocab import DEFAULT_BUDGETS, OP_TOKENS, budget_token

_OPS = ("+", "-", "*")


@dataclass(frozen=True)
class Task:
    task_id: int
    prompt_tokens: tuple[int, ...]
    target_answer: tuple[int, ...]
    l_target: int

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "prompt_tokens": list(self.prompt_tokens),
            "target_answer": list(self.target_answer),
            "l_target": self.l_target,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Task":
        return cls(
            task_id=int(rec["task_id"]),
            prompt_tokens=tuple(rec["prompt_tokens"]),
            target_answer=tuple(rec["target_answer"]),
            l_target=int(rec["l_target"]),
        )


def arithmetic_answer(a: int, op: str, b: int) -> int:
    if op == "+":
        return (a + b) % 10
    if op == "-":
        return (a - b) % 10
    if op == "*":
        return (a * b) % 10
    raise ValueError(f"unknown op {op!r}")


def build_task(task_id: int, a: int, op: str, b: int, budget: int,
               budgets: tuple[int, ...] = DEFAULT_BUDGETS) -> Task:
    prompt = (a, OP_TOKENS[op], b, budget_token(budget, budgets))
    answer = (arithmetic_answer(a, op, b),)
    return Task(task_id=task_id, prompt_tokens=prompt,
                target_answer=answer, l_target=budget)


def generate_dataset(seed: int, n: int,
                     budgets: tuple[int, ...] = DEFAULT_BUDGETS) -> list[Task]:
    """Deterministic dataset; same seed gives byte-identical tasks."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = SplitMix64(seed)
    tasks = []
    for i in range(n):
        a = rng.next_below(10)
        op = _OPS[rng.next_below(3)]
        b = rng.next_below(10)
        budget = budgets[rng.next_below(len(budgets))]
        tasks.append(build_task(i, a, op, b, budget, budgets))
    return tasks


def task_for_step(task: Task, step: int,
                  budgets: tuple[int, ...] = DEFAULT_BUDGETS) -> Task:
    """The task as posed at a given rollout step: budget re-drawn from
    (task_id, step), prompt's budget token swapped to match."""
    idx = mix64(mix64(task.task_id * 0x9E3779B97F4A7C15) ^ step) % len(budgets)
    budget = budgets[idx]
    prompt = task.prompt_tokens[:-1] + (budget_token(budget, budgets),)
    return Task(task_id=task.task_id, prompt_tokens=prompt,
                target_answer=task.target_answer, l_target=budget)


def save_dataset(path: str | Path, tasks: list[Task]) -> None:
    """One canonical-JSON record per line; byte-exact given the tasks."""
    with open(path, "wb") as f:
        for t in tasks:
            f.write(canonical_json(t.to_record()) + b"\n")


def load_dataset(path: str | Path) -> list[Task]:
    tasks = []
    with open(path, "rb") as f:
        for line in f:
            line = line.strip()
            if line:
                tasks.append(Task.from_record(json.loads(line)))
    return tasks
