"""Adversarial rollout-file generators for soundness testing.

Six attack classes, each violating exactly one audit check so a test
can assert not just rejection but the *named* reason:

    malformed-file       -> schema
    cherry-picked-prompt -> seed
    forged-reward        -> bounds
    early-eos            -> termination
    token-substitution   -> sampling
    wrong-model          -> commitment

Every forgery is internally consistent everywhere else: signatures are
valid (the adversary owns its key), rewards follow from the tokens it
reports, and so on. That is the point -- a lazy forgery would trip the
cheap checks and never exercise the deep ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ModelConfig
from ..keys import SigningKey
from ..policy import (
    PolicyParams,
    compute_advantages,
    forward,
    sample_completions,
    sequence_logprobs,
)
from ..tasks import Task, task_for_step, total_reward
from ..worker.files import RolloutFile, build_rollout_file
from ..worker.rollout import (
    build_commitments,
    build_submission,
    derive_seed,
    sampling_stream,
    select_prompts,
)

ATTACK_CLASSES = (
    "malformed-file", "cherry-picked-prompt", "forged-reward",
    "early-eos", "token-substitution", "wrong-model",
)

EXPECTED_CHECK = {
    "malformed-file": "schema",
    "cherry-picked-prompt": "seed",
    "forged-reward": "bounds",
    "early-eos": "termination",
    "token-substitution": "sampling",
    "wrong-model": "commitment",
}


@dataclass
class Forge:
    """Builds honest and adversarial submissions from one node identity."""

    params: PolicyParams          # the claimed (current) checkpoint
    stale_params: PolicyParams    # an older checkpoint, close in weight space
    other_params: PolicyParams    # an unrelated policy (the cheap substitute)
    mcfg: ModelConfig
    dataset: list[Task]
    key: SigningKey
    checkpoint_version: int
    group_size: int = 4
    prompts_per_file: int = 2
    temperature: float = 1.0
    alpha: float = 0.01
    budgets: tuple[int, ...] = (8, 16, 24, 32)
    eos_floor: float = 0.1

    def _submission(self, step: int, sub: int, params=None) -> RolloutFile:
        return build_submission(
            params if params is not None else self.params,
            self.mcfg, self.dataset, self.key.address, step, sub,
            self.checkpoint_version, prompts_per_file=self.prompts_per_file,
            group_size=self.group_size, temperature=self.temperature,
            alpha=self.alpha, budgets=self.budgets, eos_floor=self.eos_floor)

    def _rebuild_record(self, file: RolloutFile, idx: int, output: list[int],
                        params: PolicyParams) -> None:
        """Replace a record's tokens and re-derive every dependent field
        honestly (probs, commitments, rewards, group advantages)."""
        rec = file.records[idx]
        base = next(t for t in self.dataset if t.task_id == rec.task_id)
        task = task_for_step(base, file.step, self.budgets)
        logp, hidden = sequence_logprobs(params, self.mcfg,
                                         list(task.prompt_tokens), output)
        probs = np.exp(logp)
        rec.output_tokens = list(output)
        rec.chosen_probs = [float(p) for p in probs]
        rec.commitments = [d.hex() for d in
                           build_commitments(hidden, file.commit_interval)]
        rec.eos_prob_at_end = (float(probs[-1])
                               if output[-1] == self.mcfg.eos_id else None)
        rb = total_reward(task, output, self.alpha)
        rec.r_task, rec.r_total = rb.r_task, rb.r_total
        self._refresh_group_advantages(file, rec.group_index)

    def _refresh_group_advantages(self, file: RolloutFile, g: int) -> None:
        group = file.group(g)
        advs = compute_advantages(np.array([r.r_total for r in group]))
        for r, a in zip(group, advs):
            r.advantage = float(a)

    # -- honest baseline ------------------------------------------------

    def honest(self, step: int, sub: int) -> bytes:
        return build_rollout_file(self._submission(step, sub), self.key)

    # -- the six attack classes ----------------------------------------

    def malformed_file(self, step: int, sub: int, kind: str = "missing-record") -> bytes:
        file = self._submission(step, sub)
        if kind == "missing-record":
            file.records = file.records[:-1]           # G-1 records in a group
            return build_rollout_file(file, self.key)
        blob = build_rollout_file(file, self.key)
        if kind == "truncated":
            return blob[:-25]
        if kind == "garbage-line":
            lines = blob.split(b"\n")
            lines[2] = b"{not json"
            return b"\n".join(lines)
        if kind == "bad-signature":
            return blob.replace(b'"signature":"' + blob.split(b'"signature":"')[1][:8],
                                b'"signature":"00000000')
        raise ValueError(f"unknown malformed kind {kind}")

    def cherry_picked_prompt(self, step: int, sub: int) -> bytes:
        """Swap group 0 for a different task, generated honestly."""
        file = self._submission(step, sub)
        seed = derive_seed(self.key.address, step, sub)
        picks = select_prompts(len(self.dataset), seed, self.prompts_per_file)
        substitute = next(t for i, t in enumerate(self.dataset)
                          if i not in picks)
        task = task_for_step(substitute, step, self.budgets)
        rng_outputs = sample_completions(
            self.params, self.mcfg,
            [list(task.prompt_tokens)] * self.group_size,
            [sampling_stream(seed, 0, m, self.group_size)
             for m in range(self.group_size)],
            self.temperature, eos_floor=self.eos_floor)
        for m, out in enumerate(rng_outputs):
            file.records[m].task_id = substitute.task_id
            self._rebuild_record(file, m, out, self.params)
        return build_rollout_file(file, self.key)

    def forged_reward(self, step: int, sub: int, kind: str = "flipped-task-reward") -> bytes:
        file = self._submission(step, sub)
        if kind == "flipped-task-reward":
            # claim success on a failed record, keeping r_total and the
            # advantages arithmetically consistent with the lie
            rec = next((r for r in file.records if r.r_task == 0),
                       file.records[0])
            rec.r_task = 1 - rec.r_task
            rec.r_total = rec.r_total + (1 if rec.r_task == 1 else -1)
            self._refresh_group_advantages(file, rec.group_index)
        elif kind == "inflated-advantage":
            file.records[0].advantage = 100.0
        else:
            raise ValueError(f"unknown forgery kind {kind}")
        return build_rollout_file(file, self.key)

    def early_eos(self, step: int, sub: int) -> bytes:
        """Cut a completion short with an implausible eos."""
        file = self._submission(step, sub)
        for idx, rec in enumerate(file.records):
            base = next(t for t in self.dataset if t.task_id == rec.task_id)
            task = task_for_step(base, file.step, self.budgets)
            prompt = list(task.prompt_tokens)
            room = self.mcfg.max_len - len(prompt)
            for cut in range(1, min(len(rec.output_tokens) + 1, room - 1)):
                prefix = rec.output_tokens[:cut]
                if prefix[-1] == self.mcfg.eos_id:
                    continue
                p_eos = forward(self.params, self.mcfg,
                                prompt + prefix)[self.mcfg.eos_id]
                if p_eos <= 0.09:
                    forged = prefix + [self.mcfg.eos_id]
                    self._rebuild_record(file, idx, forged, self.params)
                    return build_rollout_file(file, self.key)
        raise RuntimeError("could not find an implausible eos position")

    def token_substitution(self, step: int, sub: int) -> bytes:
        """Tokens from a different policy, prefilled with the real one.

        Outputs are padded to max length so termination cannot trip;
        the recomputed chosen-token probabilities are what give the
        substitution away.
        """
        file = self._submission(step, sub)
        seed = derive_seed(self.key.address, step, sub)
        for idx, rec in enumerate(file.records):
            base = next(t for t in self.dataset if t.task_id == rec.task_id)
            task = task_for_step(base, file.step, self.budgets)
            prompt = list(task.prompt_tokens)
            room = self.mcfg.max_len - len(prompt)
            rng = sampling_stream(seed ^ 0xBAD, rec.group_index,
                                  rec.member_index, self.group_size)
            out = sample_completions(self.other_params, self.mcfg, [prompt],
                                     [rng], self.temperature)[0]
            out = [t if t != self.mcfg.eos_id else (self.mcfg.eos_id + 1) % self.mcfg.vocab
                   for t in out]
            while len(out) < room:
                out.append(out[len(out) % max(1, len(out) - 1)])
            out = out[:room]
            self._rebuild_record(file, idx, out, self.params)
        return build_rollout_file(file, self.key)

    def wrong_model(self, step: int, sub: int) -> bytes:
        """Everything generated honestly under a stale checkpoint, but
        claiming the current version."""
        file = self._submission(step, sub, params=self.stale_params)
        return build_rollout_file(file, self.key)

    def generate(self, attack: str, step: int, sub: int) -> bytes:
        return {
            "malformed-file": self.malformed_file,
            "cherry-picked-prompt": self.cherry_picked_prompt,
            "forged-reward": self.forged_reward,
            "early-eos": self.early_eos,
            "token-substitution": self.token_substitution,
            "wrong-model": self.wrong_model,
        }[attack](step, sub)
