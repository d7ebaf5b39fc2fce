import numpy as np
import pytest

from swarm.config import TOY_MODEL
from swarm.keys import SigningKey
from swarm.policy import init_params
from swarm.tasks import generate_dataset
from swarm.validator import CheckContext, check_sampling, check_termination, validate_file
from swarm.validator.adversaries import ATTACK_CLASSES, EXPECTED_CHECK, Forge
from swarm.worker.files import parse_rollout_file

MCFG = TOY_MODEL
DATASET = generate_dataset(seed=10, n=64)
KEY = SigningKey.from_seed(7, 0)

PARAMS = init_params(MCFG, seed=2, scale=1.0)
STALE = PARAMS.copy()
_rng = np.random.default_rng(3)
for _a in STALE.arrays():
    _a += _rng.normal(0, 1e-3, _a.shape)
OTHER = init_params(MCFG, seed=77, scale=1.0)

CHECKPOINTS = {5: PARAMS, 2: STALE}


def make_ctx(**kw):
    defaults = dict(
        mcfg=MCFG, dataset=DATASET, alpha=0.01, budgets=(8, 16, 24, 32),
        group_size=4, p_low=0.005,
        load_checkpoint=lambda v: CHECKPOINTS.get(v),
    )
    defaults.update(kw)
    return CheckContext(**defaults)


def make_forge(**kw):
    defaults = dict(params=PARAMS, stale_params=STALE, other_params=OTHER,
                    mcfg=MCFG, dataset=DATASET, key=KEY, checkpoint_version=5)
    defaults.update(kw)
    return Forge(**defaults)


FORGE = make_forge()
CTX = make_ctx()


class TestHonestFiles:
    def test_honest_files_accepted(self):
        for step in range(1, 21):
            verdict = validate_file(FORGE.honest(step, 0), CTX)
            assert verdict.result == "accept", verdict.details
            assert verdict.failed_check is None

    def test_verdicts_are_deterministic(self):
        blob = FORGE.honest(3, 1)
        a = validate_file(blob, CTX)
        b = validate_file(blob, CTX)
        assert a == b

    def test_no_token_sampling_during_validation(self, monkeypatch):
        import swarm.policy.model as model

        def boom(*a, **k):
            raise AssertionError("validator sampled tokens")

        monkeypatch.setattr(model, "sample_completions", boom)
        blob = FORGE.honest(4, 0)
        assert validate_file(blob, CTX).result == "accept"


class TestAdversaries:
    @pytest.mark.parametrize("attack", ATTACK_CLASSES)
    def test_each_class_rejected_with_named_check(self, attack):
        for step in range(1, 6):
            blob = FORGE.generate(attack, step, 0)
            verdict = validate_file(blob, CTX)
            assert verdict.result == "reject", f"{attack} accepted at step {step}"
            assert verdict.failed_check == EXPECTED_CHECK[attack], (
                f"{attack}: expected {EXPECTED_CHECK[attack]}, "
                f"got {verdict.failed_check} ({verdict.details})")

    @pytest.mark.parametrize("kind", ["truncated", "garbage-line", "bad-signature"])
    def test_malformed_variants(self, kind):
        verdict = validate_file(FORGE.malformed_file(2, 0, kind), CTX)
        assert (verdict.result, verdict.failed_check) == ("reject", "schema")

    def test_inflated_advantage_variant(self):
        verdict = validate_file(FORGE.forged_reward(2, 0, "inflated-advantage"), CTX)
        assert (verdict.result, verdict.failed_check) == ("reject", "bounds")

    def test_permuted_prompt_order_rejected(self):
        from swarm.worker.files import build_rollout_file
        file = FORGE._submission(3, 0)
        g = file.group_size
        file.records = file.records[g:] + file.records[:g]
        for idx, rec in enumerate(file.records):
            rec.group_index, rec.member_index = divmod(idx, g)
        verdict = validate_file(build_rollout_file(file, KEY), CTX)
        assert (verdict.result, verdict.failed_check) == ("reject", "seed")

    def test_unknown_checkpoint_rejected_as_commitment(self):
        forge = make_forge(checkpoint_version=9)
        verdict = validate_file(forge.honest(2, 0), CTX)
        assert (verdict.result, verdict.failed_check) == ("reject", "commitment")
        assert "unknown checkpoint" in verdict.details

    def test_wrong_group_size_rejected_as_schema(self):
        verdict = validate_file(FORGE.honest(2, 0), make_ctx(group_size=8))
        assert (verdict.result, verdict.failed_check) == ("reject", "schema")


class TestTerminationCheck:
    class Rec:
        def __init__(self, tokens):
            self.output_tokens = tokens

    def test_high_prob_eos_ok(self):
        rec = self.Rec([1, 2, MCFG.eos_id])
        probs = np.array([0.3, 0.4, 0.5])
        assert check_termination(rec, probs, 4, CTX) is None

    def test_low_prob_eos_rejected(self):
        rec = self.Rec([1, 2, MCFG.eos_id])
        probs = np.array([0.3, 0.4, 0.05])
        assert check_termination(rec, probs, 4, CTX) is not None

    def test_max_len_without_eos_ok(self):
        n = MCFG.max_len - 4
        rec = self.Rec([1] * n)
        probs = np.full(n, 1e-4)
        assert check_termination(rec, probs, 4, CTX) is None

    def test_short_without_eos_rejected(self):
        rec = self.Rec([1, 2, 3])
        probs = np.array([0.3, 0.3, 0.3])
        assert check_termination(rec, probs, 4, CTX) is not None


class TestSamplingCheck:
    class Rec:
        def __init__(self, n):
            self.output_tokens = [1] * n

    def test_short_records_skipped(self):
        rec = self.Rec(8)
        assert check_sampling(rec, np.full(8, 1e-9), CTX) is None

    def test_greedy_decoding_ok(self):
        rec = self.Rec(32)
        assert check_sampling(rec, np.full(32, 0.97), CTX) is None

    def test_low_mode_rejected(self):
        rec = self.Rec(32)
        probs = np.concatenate([np.full(16, 0.9), np.full(16, 1e-4)])
        assert check_sampling(rec, probs, CTX) is not None
