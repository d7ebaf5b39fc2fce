import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarm.config import TrainConfig
from swarm.policy import NumericError, compute_advantages, grpo_objective, kl_estimate

CFG = TrainConfig(kl_coef=0.0, entropy_coef=0.0)


def obj(new, old, ref=None, adv=None, cfg=CFG):
    new = np.asarray(new, dtype=float)
    old = np.asarray(old, dtype=float)
    ref = new if ref is None else np.asarray(ref, dtype=float)
    adv = np.zeros_like(new) if adv is None else np.asarray(adv, dtype=float)
    return grpo_objective(new, old, ref, adv, cfg)


class TestAdvantages:
    def test_identical_rewards_are_exact_zeros(self):
        adv = compute_advantages(np.array([1.0, 1.0, 1.0, 1.0]))
        assert adv.tolist() == [0.0, 0.0, 0.0, 0.0]

    def test_two_rewards_hand_value(self):
        # mean 0.5, population std 0.5
        adv = compute_advantages(np.array([1.0, 0.0]), adv_eps=0.0)
        assert np.allclose(adv, [1.0, -1.0], atol=1e-12)

    def test_one_in_four_hand_value(self):
        # mean 0.25, population std sqrt(3)/4
        adv = compute_advantages(np.array([1.0, 0.0, 0.0, 0.0]), adv_eps=0.0)
        expect = [math.sqrt(3), -1 / math.sqrt(3), -1 / math.sqrt(3), -1 / math.sqrt(3)]
        assert np.allclose(adv, expect, atol=1e-12)

    def test_mean_only_mode(self):
        adv = compute_advantages(np.array([2.0, 0.0]), norm="mean")
        assert np.allclose(adv, [1.0, -1.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(NumericError):
            compute_advantages(np.array([1.0, np.nan]))

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=12))
    def test_mean_is_zero(self, rewards):
        adv = compute_advantages(np.array(rewards))
        assert abs(adv.mean()) < 1e-9


class TestObjective:
    def test_identity_ratio_gives_negative_mean_advantage(self):
        adv = np.array([0.5, -1.0, 2.0])
        lp = np.array([-1.0, -2.0, -0.5])
        stats = obj(lp, lp, adv=adv)
        assert abs(stats.loss - (-adv.mean())) < 1e-12
        assert stats.clip_fraction == 0.0

    def test_delta_bounds_negative_advantage_blowup(self):
        # rho=10, A=-1: min(min(10,4)*-1, 1.2*-1) = -4
        stats = obj([0.0], [-math.log(10)], adv=[-1.0])
        assert abs(stats.terms[0] - (-4.0)) < 1e-9
        assert stats.clip_fraction == 1.0

    def test_positive_advantage_clips_at_upper_epsilon(self):
        # rho=1.5, A=+1: min(1.5, 1.2) = 1.2
        stats = obj([0.0], [-math.log(1.5)], adv=[1.0])
        assert abs(stats.terms[0] - 1.2) < 1e-9
        assert stats.clip_fraction == 1.0

    def test_nan_input_raises(self):
        with pytest.raises(NumericError):
            obj([np.nan], [0.0], adv=[1.0])

    def test_inf_ratio_raises_numeric_error(self):
        with pytest.raises(NumericError):
            obj([2000.0], [0.0], adv=[1.0])

    def test_kl_and_entropy_terms_enter_loss(self):
        cfg = TrainConfig(kl_coef=0.5, entropy_coef=0.25)
        new = np.array([-1.0])
        ref = np.array([-1.0 + math.log(2)])
        ent = np.array([1.3])
        stats = grpo_objective(new, new, ref, np.array([0.0]), cfg, entropy=ent)
        k = 2 - math.log(2) - 1
        assert abs(stats.mean_kl - k) < 1e-12
        assert abs(stats.loss - (0.5 * k - 0.25 * 1.3)) < 1e-12


class TestKLEstimate:
    def test_zero_when_equal(self):
        assert kl_estimate(np.array([-1.0]), np.array([-1.0]))[0] == 0.0

    def test_log2_hand_value(self):
        k = kl_estimate(np.array([-2.0]), np.array([-2.0 + math.log(2)]))
        assert abs(k[0] - (2 - math.log(2) - 1)) < 1e-12

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=8),
           st.lists(st.floats(-3, 3), min_size=1, max_size=8))
    def test_nonnegative(self, a, b):
        n = min(len(a), len(b))
        k = kl_estimate(np.array(a[:n]), np.array(b[:n]))
        assert (k >= 0).all()


@st.composite
def token_batches(draw):
    n = draw(st.integers(1, 40))
    floats = st.floats(-2.0, 2.0, allow_nan=False)
    new = np.array(draw(st.lists(floats, min_size=n, max_size=n)))
    old = np.array(draw(st.lists(floats, min_size=n, max_size=n)))
    adv = np.array(draw(st.lists(st.floats(-3.0, 3.0), min_size=n, max_size=n)))
    return new, old, adv


class TestObjectiveProperties:
    @settings(max_examples=200)
    @given(token_batches())
    def test_delta_bound_and_upper_bound(self, batch):
        new, old, adv = batch
        stats = obj(new, old, adv=adv)
        delta, hi = CFG.delta, 1.0 + CFG.epsilon
        neg = adv < 0
        assert (stats.terms[neg] >= delta * adv[neg] - 1e-12).all()
        pos = adv >= 0
        assert (stats.terms[pos] <= hi * adv[pos] + 1e-12).all()

    @settings(max_examples=200)
    @given(token_batches())
    def test_disabled_delta_matches_standard_grpo(self, batch):
        new, old, adv = batch
        stats = obj(new, old, adv=adv, cfg=CFG.with_(delta=None))
        # independent reference: the textbook one-sided clipped surrogate
        ratio = np.exp(new - old)
        expect = np.minimum(ratio * adv,
                            np.clip(ratio, 1 - CFG.epsilon, 1 + CFG.epsilon) * adv)
        assert np.allclose(stats.terms, expect, atol=1e-12)
        assert abs(stats.loss - (-expect.mean())) < 1e-12

    @settings(max_examples=100)
    @given(token_batches(), st.floats(0.05, 0.4), st.floats(0.4, 0.9))
    def test_clip_fraction_bounded_and_monotone_in_epsilon(self, batch, eps_small, eps_big):
        new, old, adv = batch
        narrow = obj(new, old, adv=adv, cfg=CFG.with_(epsilon=eps_small, delta=4.0))
        wide = obj(new, old, adv=adv, cfg=CFG.with_(epsilon=eps_big, delta=4.0))
        for s in (narrow, wide):
            assert 0.0 <= s.clip_fraction <= 1.0
        assert wide.clip_fraction <= narrow.clip_fraction + 1e-12
