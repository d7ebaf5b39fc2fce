"""Step accounting for the pull-based scheduler.

The counter names the smallest step whose batch has not been assembled
yet; workers poll it and generate for exactly that step. It never
moves backwards. When a step's full quota of submissions turns out to
contain too few usable groups, the quota is raised and the counter
simply keeps naming the same step -- that is the online-filtering
loop: keep sampling until a full batch of non-degenerate groups exists.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field


@dataclass
class StepStatus:
    required_groups: int
    submissions_per_worker: int
    accepted_groups: int = 0
    nondegenerate_groups: int = 0
    consumed: bool = False


@dataclass
class StepLedger:
    required_groups: int
    base_submissions: int
    steps: dict[int, StepStatus] = field(default_factory=dict)
    _current: int = 1
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def status(self, step: int) -> StepStatus:
        with self._lock:
            if step not in self.steps:
                self.steps[step] = StepStatus(
                    required_groups=self.required_groups,
                    submissions_per_worker=self.base_submissions)
            return self.steps[step]

    def counter(self) -> int:
        """Smallest unconsumed step; monotone by construction."""
        return self._current

    def raise_quota(self, step: int) -> int:
        st = self.status(step)
        with self._lock:
            st.submissions_per_worker += self.base_submissions
            return st.submissions_per_worker

    def mark_consumed(self, step: int, accepted: int, nondeg: int) -> None:
        st = self.status(step)
        with self._lock:
            if step != self._current:
                raise RuntimeError(f"consuming step {step} out of order")
            st.consumed = True
            st.accepted_groups = accepted
            st.nondegenerate_groups = nondeg
            self._current = step + 1
