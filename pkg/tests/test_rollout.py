import numpy as np
import pytest

from swarm.config import ModelConfig
from swarm.keys import SigningKey
from swarm.policy import init_params, sequence_logprobs
from swarm.tasks import build_task, generate_dataset, task_for_step
from swarm.worker import (
    RolloutSchemaError,
    build_commitments,
    build_rollout_file,
    build_submission,
    derive_seed,
    generate_group,
    parse_rollout_file,
    select_prompts,
)

CFG = ModelConfig(vocab=20, window=12, embed_dim=4, hidden_dim=8,
                  max_len=12, eos_id=14, pad_id=15)
KEY = SigningKey.from_seed(1234, 0)


class TestSeed:
    def test_hand_value(self):
        addr = (7).to_bytes(8, "little").hex() + "00" * 24
        assert derive_seed(addr, step=3, submission_index=2) == 23

    def test_step_zero_yields_submission_index(self):
        addr = SigningKey.from_seed(9, 3).address
        assert derive_seed(addr, 0, 5) == 5

    def test_wraps_mod_2_64(self):
        addr = "ff" * 32
        s = derive_seed(addr, step=2**40, submission_index=1)
        assert 0 <= s < 2**64

    def test_same_triple_same_prompts(self):
        seed = derive_seed(KEY.address, 7, 1)
        assert select_prompts(100, seed, 8) == select_prompts(100, seed, 8)

    def test_different_submissions_differ(self):
        a = select_prompts(1000, derive_seed(KEY.address, 7, 0), 8)
        b = select_prompts(1000, derive_seed(KEY.address, 7, 1), 8)
        assert a != b


class TestCommitments:
    def test_short_sequence_single_digest(self):
        hidden = np.random.default_rng(0).normal(size=(5, 8))
        assert len(build_commitments(hidden, k=32)) == 1

    def test_length_65_gives_three_digests(self):
        hidden = np.random.default_rng(0).normal(size=(65, 8))
        assert len(build_commitments(hidden, k=32)) == 3

    def test_perturbation_changes_first_affected_digest(self):
        rng = np.random.default_rng(1)
        hidden = rng.normal(size=(70, 8))
        base = build_commitments(hidden, k=32)
        mutated = hidden.copy()
        mutated[40, 3] += 1e-3  # second interval
        changed = build_commitments(mutated, k=32)
        assert changed[0] == base[0]
        assert changed[1] != base[1]
        assert changed[2] != base[2]  # chained

    def test_sub_rounding_perturbation_is_invisible(self):
        hidden = np.full((4, 3), 0.1234561)
        wiggled = hidden + 2e-8
        assert build_commitments(hidden) == build_commitments(wiggled)

    def test_chaining_from_zero_digest(self):
        import hashlib
        hidden = np.ones((2, 2))
        block = np.round(hidden, 6).astype("<f8").tobytes()
        expect = hashlib.sha256(b"\x00" * 32 + block).digest()
        assert build_commitments(hidden, k=32) == [expect]


class TestGenerateGroup:
    params = init_params(CFG, seed=5)
    task = build_task(3, 4, "+", 5, budget=8)

    def test_rerun_is_identical(self):
        a = generate_group(self.params, CFG, self.task, 4, 1.0, seed=9,
                           group_index=0, alpha=0.01)
        b = generate_group(self.params, CFG, self.task, 4, 1.0, seed=9,
                           group_index=0, alpha=0.01)
        assert [c.output_tokens for c in a] == [c.output_tokens for c in b]
        assert [c.advantage for c in a] == [c.advantage for c in b]

    def test_max_len_termination_has_no_eos_prob(self):
        group = generate_group(self.params, CFG, self.task, 8, 1.0, seed=2,
                               group_index=0, alpha=0.01)
        budget = CFG.max_len - len(self.task.prompt_tokens)
        for c in group:
            if c.output_tokens[-1] != CFG.eos_id:
                assert len(c.output_tokens) == budget
                assert c.eos_prob_at_end is None
            else:
                assert c.eos_prob_at_end is not None
                assert 0.0 < c.eos_prob_at_end <= 1.0

    def test_equal_rewards_give_exact_zero_advantages(self):
        # alpha=0 and a task no random policy solves: all r_total equal
        impossible = build_task(0, 9, "*", 9, budget=8)
        group = generate_group(self.params, CFG, impossible, 6, 1.0, seed=3,
                               group_index=0, alpha=0.0)
        if len({c.r_total for c in group}) == 1:
            assert all(c.advantage == 0.0 for c in group)

    def test_commitments_reproducible_by_prefill(self):
        group = generate_group(self.params, CFG, self.task, 4, 1.0, seed=11,
                               group_index=1, alpha=0.01)
        for c in group:
            logp, hidden = sequence_logprobs(
                self.params, CFG, list(self.task.prompt_tokens), c.output_tokens)
            assert build_commitments(hidden) == c.commitments
            assert np.array_equal(np.exp(logp), c.chosen_probs)


class TestRolloutFile:
    @staticmethod
    def make_file(step=4, sub=0, groups=2):
        params = init_params(CFG, seed=5)
        dataset = generate_dataset(seed=10, n=50)
        file = build_submission(
            params, CFG, dataset, KEY.address, step, sub,
            checkpoint_version=2, prompts_per_file=groups, group_size=4,
            temperature=1.0, alpha=0.01, budgets=(8, 16, 24, 32))
        return file

    def test_roundtrip(self):
        file = self.make_file()
        blob = build_rollout_file(file, KEY)
        parsed = parse_rollout_file(blob)
        assert parsed == file

    def test_group_task_ids_match_seed_selection(self):
        file = self.make_file(step=6, sub=1, groups=3)
        dataset = generate_dataset(seed=10, n=50)
        picks = select_prompts(len(dataset), derive_seed(KEY.address, 6, 1), 3)
        assert [file.group(g)[0].task_id for g in range(3)] == \
            [dataset[i].task_id for i in picks]

    def test_group_advantages_mean_zero_or_all_zero(self):
        file = self.make_file(groups=4)
        for g in range(file.num_groups):
            advs = np.array([r.advantage for r in file.group(g)])
            assert abs(advs.mean()) < 1e-9 or np.all(advs == 0.0)

    def test_rewards_follow_stepped_budget(self):
        file = self.make_file(step=9)
        dataset = generate_dataset(seed=10, n=50)
        by_id = {t.task_id: t for t in dataset}
        for rec in file.records:
            task = task_for_step(by_id[rec.task_id], 9)
            target = rec.r_task - 0.01 * abs(task.l_target - len(rec.output_tokens))
            assert abs(rec.r_total - target) < 1e-12

    def test_truncated_file_rejected(self):
        blob = build_rollout_file(self.make_file(), KEY)
        with pytest.raises(RolloutSchemaError):
            parse_rollout_file(blob[:-30])

    def test_missing_record_rejected(self):
        file = self.make_file()
        file.records = file.records[:-1]
        blob = build_rollout_file(file, KEY)
        with pytest.raises(RolloutSchemaError, match="expected"):
            parse_rollout_file(blob)

    def test_wrong_signature_rejected(self):
        other = SigningKey.from_seed(999, 0)
        file = self.make_file()
        file.node_address = other.address
        for r in file.records:
            r.node_address = other.address
        blob = build_rollout_file(file, other)
        # tamper: swap address back without re-signing
        blob = blob.replace(other.address.encode(), KEY.address.encode())
        with pytest.raises(RolloutSchemaError, match="signature"):
            parse_rollout_file(blob)

    def test_tampered_record_rejected(self):
        blob = build_rollout_file(self.make_file(), KEY)
        lines = blob.split(b"\n")
        lines[1] = lines[1].replace(b'"r_task":0', b'"r_task":1')
        if b'"r_task":1' not in lines[1]:
            lines[1] = lines[1].replace(b'"r_task":1', b'"r_task":0', 1)
        with pytest.raises(RolloutSchemaError, match="hash"):
            parse_rollout_file(b"\n".join(lines))
