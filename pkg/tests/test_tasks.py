import numpy as np
import pytest

from swarm.config import TOY_MODEL, ModelConfig
from swarm.policy import sample_completions
from swarm.policy.model import zero_params
from swarm.prng import SplitMix64
from swarm.tasks import (
    DELIM_ID,
    EOS_ID,
    Task,
    budget_token,
    build_task,
    generate_dataset,
    load_dataset,
    offline_filter,
    save_dataset,
    task_for_step,
    total_reward,
    verify,
)
from swarm.tasks.vocab import DEFAULT_BUDGETS


class TestDataset:
    def test_same_seed_gives_byte_identical_datasets(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(a, generate_dataset(seed=1, n=5))
        save_dataset(b, generate_dataset(seed=1, n=5))
        assert a.read_bytes() == b.read_bytes()
        assert load_dataset(a) == generate_dataset(seed=1, n=5)

    def test_three_plus_four_encodes_seven(self):
        task = build_task(0, 3, "+", 4, budget=8)
        assert task.target_answer == (7,)
        assert task.prompt_tokens[:3] == (3, 10, 4)

    def test_minus_and_times_wrap_mod_10(self):
        assert build_task(0, 2, "-", 5, 8).target_answer == (7,)
        assert build_task(0, 7, "*", 8, 8).target_answer == (6,)

    def test_thousand_unique_ids(self):
        tasks = generate_dataset(seed=3, n=1000)
        assert len({t.task_id for t in tasks}) == 1000

    def test_budgets_come_from_configured_set(self):
        for t in generate_dataset(seed=9, n=200):
            assert t.l_target in DEFAULT_BUDGETS
            assert t.prompt_tokens[-1] == budget_token(t.l_target)

    def test_task_for_step_is_deterministic_and_consistent(self):
        task = build_task(17, 3, "+", 4, budget=8)
        a = task_for_step(task, 5)
        b = task_for_step(task, 5)
        assert a == b
        assert a.l_target in DEFAULT_BUDGETS
        assert a.prompt_tokens[-1] == budget_token(a.l_target)
        assert a.target_answer == task.target_answer
        # budgets vary across steps
        seen = {task_for_step(task, s).l_target for s in range(50)}
        assert len(seen) > 1


class TestVerify:
    task = build_task(0, 3, "+", 4, budget=8)  # answer 7

    def test_correct_answer_span(self):
        assert verify(self.task, [2, 9, DELIM_ID, 7, EOS_ID]) == 1
        assert verify(self.task, [DELIM_ID, 7]) == 1

    def test_empty_output(self):
        assert verify(self.task, []) == 0

    def test_correct_digit_without_delimiter(self):
        assert verify(self.task, [7, EOS_ID]) == 0

    def test_malformed_variants_never_raise(self):
        cases = [
            [DELIM_ID],                      # empty span
            [DELIM_ID, 8, EOS_ID],           # wrong digit
            [DELIM_ID, 7, 7, EOS_ID],        # extra digit
            [7, DELIM_ID, EOS_ID],           # digit before delimiter
            [DELIM_ID, 7, DELIM_ID, EOS_ID],  # later delimiter wins
            [EOS_ID],
        ]
        for out in cases:
            assert verify(self.task, out) == 0

    def test_last_delimiter_is_authoritative(self):
        assert verify(self.task, [DELIM_ID, 2, DELIM_ID, 7, EOS_ID]) == 1

    def test_pure_function(self):
        out = [1, DELIM_ID, 7, EOS_ID]
        assert verify(self.task, out) == verify(self.task, out) == 1


class TestTotalReward:
    def test_paper_scale_hand_value(self):
        task = Task(task_id=0, prompt_tokens=(1,), target_answer=(7,), l_target=2000)
        out = [DELIM_ID] * 2999 + [7]
        out[-2] = DELIM_ID
        rb = total_reward(task, out, alpha=0.0003)
        assert rb.r_task == 1
        assert abs(rb.r_total - 0.7) < 1e-12

    def test_exact_length_keeps_task_reward(self):
        task = build_task(0, 1, "+", 1, budget=8)
        out = [0] * 5 + [DELIM_ID, 2, EOS_ID]
        rb = total_reward(task, out, alpha=0.5)
        assert len(out) == task.l_target
        assert rb.length_penalty == 0.0
        assert rb.r_total == rb.r_task == 1

    def test_alpha_zero_ignores_length(self):
        task = build_task(0, 1, "+", 1, budget=32)
        rb = total_reward(task, [DELIM_ID, 2, EOS_ID], alpha=0.0)
        assert rb.r_total == rb.r_task == 1

    def test_reward_bounds(self):
        alpha = 0.01
        rng = np.random.default_rng(0)
        task = build_task(0, 4, "*", 4, budget=16)
        for _ in range(200):
            out = rng.integers(0, TOY_MODEL.vocab,
                               size=rng.integers(0, TOY_MODEL.max_len)).tolist()
            rb = total_reward(task, out, alpha)
            assert rb.r_total <= 1.0
            assert rb.r_total >= -alpha * TOY_MODEL.max_len
            assert rb.r_task in (0, 1)


class TestOfflineFilter:
    # identity embeddings so hand-built hidden units can read the last
    # context token directly
    CFG = ModelConfig(vocab=20, window=6, embed_dim=20, hidden_dim=8,
                      max_len=16, eos_id=EOS_ID, pad_id=15)

    @classmethod
    def crafted_params(cls):
        """Policy that emits '...=d.' with per-digit solve rates ramping
        from hopeless to easy, so the dataset spans all three difficulty
        bands of the filter."""
        params = zero_params(cls.CFG)
        params.embed[:] = np.eye(cls.CFG.vocab)
        last = cls.CFG.context_dim - cls.CFG.embed_dim
        params.hidden_w[last + DELIM_ID, 0] = 4.0   # h0: just emitted '='
        params.hidden_b[0] = -2.0
        for d in range(10):
            params.out_w[0, d] = 3.0 + 6.0 * d / 9.0
            params.hidden_w[last + d, 1] = 4.0      # h1: just emitted a digit
        params.hidden_b[1] = -2.0
        params.out_w[1, EOS_ID] = 6.0
        params.out_b[DELIM_ID] = 2.5
        return params

    @classmethod
    def oracle_counts(cls, tasks, params, k, seed):
        """Independent re-simulation of the filter's sampling process."""
        base = SplitMix64(seed)
        counts = []
        for i, task in enumerate(tasks):
            c = 0
            for j in range(k):
                out = sample_completions(params, cls.CFG,
                                         [list(task.prompt_tokens)],
                                         [base.substream(i * k + j)])[0]
                c += verify(task, out)
            counts.append(c)
        return counts

    def test_keeps_exactly_the_midband_tasks(self):
        tasks = generate_dataset(seed=21, n=60)
        params = self.crafted_params()
        counts = self.oracle_counts(tasks, params, k=8, seed=77)
        # the corpus must exercise all three bands for this test to bite
        assert any(c == 0 for c in counts)
        assert any(1 <= c <= 4 for c in counts)
        assert any(c > 4 for c in counts)
        kept = offline_filter(tasks, params, self.CFG, k=8, rng_seed=77)
        expected = [t for t, c in zip(tasks, counts) if 1 <= c <= 4]
        assert kept == expected

    def test_full_band_removes_nothing(self):
        tasks = generate_dataset(seed=4, n=20)
        params = self.crafted_params()
        kept = offline_filter(tasks, params, self.CFG, k=8,
                              low=0.0, high=1.0, rng_seed=5)
        assert kept == tasks

    def test_deterministic_given_seed(self):
        tasks = generate_dataset(seed=8, n=30)
        params = self.crafted_params()
        a = offline_filter(tasks, params, self.CFG, k=8, rng_seed=123)
        b = offline_filter(tasks, params, self.CFG, k=8, rng_seed=123)
        assert a == b
