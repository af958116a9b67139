import math

import numpy as np
import pytest

from etrlab.entropy import EntropyTrajectory, entropy_deltas
from etrlab.errors import ConfigurationError, ValidationError
from etrlab.rewards import (
    RewardConfig,
    RewardVariant,
    TrendState,
    closed_form_weights,
    compose_reward,
    etr_entropy_reward,
    etr_entropy_reward_closed_form,
    naive_reward,
    trend_reward_closed_form_from_deltas,
    trend_rewards_from_deltas,
)


def geometric_weight(t, big_t, gamma):
    # independent oracle: the inner geometric series, summed term by term
    return sum(gamma**m for m in range(big_t - t + 1))


class TestRewardConfig:
    @pytest.mark.parametrize("gamma", [0.0, 1.0, -0.2, 1.5])
    def test_gamma_domain(self, gamma):
        with pytest.raises(ConfigurationError):
            RewardConfig(gamma=gamma)

    def test_negative_lambda(self):
        with pytest.raises(ConfigurationError):
            RewardConfig(lam=-0.1)

    def test_defaults(self):
        cfg = RewardConfig()
        assert cfg.gamma == 0.9
        assert cfg.lam == 0.1
        assert cfg.variant is RewardVariant.ETR

    def test_variant_coerced_from_string(self):
        assert RewardConfig(variant="MIN_H").variant is RewardVariant.MIN_H


class TestTrendState:
    def test_initial_state(self):
        s = TrendState()
        assert s.s == 0.0 and s.step_index == 1

    def test_nonzero_initial_rejected(self):
        with pytest.raises(ValidationError):
            TrendState(s=0.5, step_index=1)

    def test_advance_matches_recursion(self):
        s = TrendState().advance(1.0, 0.5).advance(-0.5, 0.5)
        assert s.s == pytest.approx(0.0)
        assert s.step_index == 3


class TestNaiveReward:
    def test_endpoint_difference(self):
        assert naive_reward(EntropyTrajectory([2.0, 1.5, 1.0])) == 1.0

    def test_spike_invisible(self):
        assert naive_reward(EntropyTrajectory([1.0, 5.0, 1.0])) == 0.0

    def test_single_step(self):
        assert naive_reward(EntropyTrajectory([3.0])) == 0.0

    def test_telescoping_equals_delta_sum(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            t = int(rng.integers(1, 40))
            traj = EntropyTrajectory(rng.uniform(0.0, 6.0, size=t))
            total = math.fsum(entropy_deltas(traj).deltas)
            assert abs(naive_reward(traj) - total) <= 1e-12


class TestMomentumReward:
    def test_hand_unrolled_recursion(self):
        # deltas [1.0, -0.5]: S_2 = 1.0, S_3 = 0.5 * 1.0 - 0.5 = 0.0
        traj = EntropyTrajectory([2.0, 1.0, 1.5])
        reward, trend = etr_entropy_reward(traj, 0.5)
        assert reward == pytest.approx(1.0, abs=1e-12)
        assert trend == pytest.approx((1.0, 0.0), abs=1e-12)

    def test_constant_trajectory(self):
        reward, trend = etr_entropy_reward(EntropyTrajectory([1.3] * 4), 0.9)
        assert reward == 0.0
        assert trend == (0.0, 0.0, 0.0)

    @pytest.mark.parametrize("gamma", [0.1, 0.5, 0.9, 0.99])
    def test_single_delta(self, gamma):
        reward, trend = etr_entropy_reward(EntropyTrajectory([2.0, 1.0]), gamma)
        assert reward == pytest.approx(1.0, abs=1e-12)
        assert trend == (1.0,)

    def test_single_step_is_zero(self):
        reward, trend = etr_entropy_reward(EntropyTrajectory([2.0]), 0.9)
        assert reward == 0.0 and trend == ()

    @pytest.mark.parametrize("gamma", [0.0, 1.0])
    def test_gamma_out_of_range(self, gamma):
        with pytest.raises(ConfigurationError):
            etr_entropy_reward(EntropyTrajectory([1.0, 0.5]), gamma)

    def test_linearity_in_deltas(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            t = int(rng.integers(2, 20))
            d1 = rng.standard_normal(t - 1)
            d2 = rng.standard_normal(t - 1)
            a, b = rng.uniform(-2, 2, size=2)
            gamma = rng.uniform(0.05, 0.95)
            r1, _ = trend_rewards_from_deltas(d1, gamma)
            r2, _ = trend_rewards_from_deltas(d2, gamma)
            rc, _ = trend_rewards_from_deltas(a * d1 + b * d2, gamma)
            assert rc == pytest.approx(a * r1 + b * r2, abs=1e-9)

    def test_small_gamma_approaches_naive(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            t = int(rng.integers(2, 30))
            traj = EntropyTrajectory(rng.uniform(0.0, 5.0, size=t))
            reward, _ = etr_entropy_reward(traj, 1e-9)
            assert abs(reward - naive_reward(traj)) <= 1e-6


class TestClosedFormWeights:
    def test_t3_gamma_09(self):
        w = closed_form_weights(3, 0.9)
        assert w == pytest.approx((1.9, 1.0), abs=1e-12)

    @pytest.mark.parametrize("gamma", [0.1, 0.5, 0.9])
    def test_t2_is_one(self, gamma):
        assert closed_form_weights(2, gamma) == pytest.approx((1.0,), abs=1e-12)

    def test_t4_gamma_05_geometric_oracle(self):
        w = closed_form_weights(4, 0.5)
        assert w == pytest.approx((1.75, 1.5, 1.0), abs=1e-12)
        expected = tuple(geometric_weight(t, 4, 0.5) for t in (2, 3, 4))
        assert w == pytest.approx(expected, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            closed_form_weights(1, 0.9)

    def test_structure_over_grid(self):
        for gamma in [g / 100 for g in range(10, 100, 3)]:
            for t in (2, 3, 7, 25, 100):
                w = closed_form_weights(t, gamma)
                assert abs(w[-1] - 1.0) <= 1e-12
                assert all(a > b for a, b in zip(w, w[1:]))
                bound = 1.0 / (1.0 - gamma)
                assert all(v < bound for v in w)
                # interior weights exceed 1
                assert all(v > 1.0 for v in w[:-1])


class TestClosedFormEquivalence:
    def test_matches_recursion_on_examples(self):
        traj = EntropyTrajectory([2.0, 1.0, 1.5])
        assert etr_entropy_reward_closed_form(traj, 0.5) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_zero_deltas(self):
        assert etr_entropy_reward_closed_form(EntropyTrajectory([1.0] * 5), 0.9) == 0.0

    def test_random_equivalence(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            gamma = rng.uniform(0.01, 0.99)
            t = int(rng.integers(2, 51))
            deltas = rng.standard_normal(t - 1)
            recursive, _ = trend_rewards_from_deltas(deltas, gamma)
            closed = trend_reward_closed_form_from_deltas(deltas, gamma)
            assert abs(recursive - closed) <= 1e-9

    def test_early_descent_preferred(self):
        # one positive delta among zeros: earlier placement scores higher
        for t in range(3, 21):
            rewards = []
            for pos in range(t - 1):
                deltas = [0.0] * (t - 1)
                deltas[pos] = 1.0
                rewards.append(trend_reward_closed_form_from_deltas(deltas, 0.9))
            assert all(a > b for a, b in zip(rewards, rewards[1:]))


class TestComposeReward:
    def test_incorrect_gate(self):
        cfg = RewardConfig()
        traj = EntropyTrajectory([2.0, 0.5])
        b = compose_reward(False, traj, cfg)
        assert b.total == -1.0
        assert b.correctness_term == -1.0
        # entropy term still reported for diagnostics
        assert b.entropy_term == pytest.approx(1.5, abs=1e-12)

    def test_correct_with_shaping(self):
        # entropy reward 2.0 at lambda 0.1 gives 1.2
        cfg = RewardConfig(gamma=0.5, lam=0.1)
        traj = EntropyTrajectory([3.0, 1.0])  # single delta 2.0
        b = compose_reward(True, traj, cfg)
        assert b.total == pytest.approx(1.2, abs=1e-12)

    def test_zero_trend_gives_plus_one(self):
        cfg = RewardConfig(lam=1.0)
        b = compose_reward(True, EntropyTrajectory([1.7, 1.7]), cfg)
        assert b.total == pytest.approx(1.0, abs=1e-12)

    def test_gate_invariance_over_trajectories_and_lambda(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            t = int(rng.integers(1, 25))
            traj = EntropyTrajectory(rng.uniform(0.0, 4.0, size=t))
            lam = float(rng.uniform(0.0, 5.0))
            b = compose_reward(False, traj, RewardConfig(lam=lam))
            assert b.total == -1.0

    def test_naive_variant(self):
        cfg = RewardConfig(variant=RewardVariant.NAIVE_NO_GAMMA, lam=0.5)
        b = compose_reward(True, EntropyTrajectory([2.0, 5.0, 1.0]), cfg)
        assert b.entropy_term == pytest.approx(1.0, abs=1e-12)
        assert b.total == pytest.approx(1.5, abs=1e-12)

    def test_min_h_and_max_h_signed_mean(self):
        traj = EntropyTrajectory([2.0, 1.0])
        lo = compose_reward(True, traj, RewardConfig(variant=RewardVariant.MIN_H))
        hi = compose_reward(True, traj, RewardConfig(variant=RewardVariant.MAX_H))
        assert lo.entropy_term == pytest.approx(-1.5, abs=1e-12)
        assert hi.entropy_term == pytest.approx(1.5, abs=1e-12)
        assert lo.total == pytest.approx(1.0 - 0.15, abs=1e-12)
        assert hi.total == pytest.approx(1.0 + 0.15, abs=1e-12)

    def test_no_correctness_bypasses_gate(self):
        cfg = RewardConfig(gamma=0.5, lam=2.0, variant=RewardVariant.NO_CORRECTNESS)
        traj = EntropyTrajectory([3.0, 1.0])
        for correct in (True, False):
            b = compose_reward(correct, traj, cfg)
            assert b.total == pytest.approx(4.0, abs=1e-12)

    def test_correctness_only_zero_entropy_term(self):
        cfg = RewardConfig(variant=RewardVariant.CORRECTNESS_ONLY, lam=3.0)
        traj = EntropyTrajectory([5.0, 0.0])
        assert compose_reward(True, traj, cfg).total == 1.0
        assert compose_reward(False, traj, cfg).total == -1.0
        assert compose_reward(True, traj, cfg).entropy_term == 0.0

    def test_trend_diagnostic_always_present(self):
        cfg = RewardConfig(variant=RewardVariant.CORRECTNESS_ONLY)
        traj = EntropyTrajectory([2.0, 1.0, 0.5])
        b = compose_reward(True, traj, cfg)
        _, trend = etr_entropy_reward(traj, cfg.gamma)
        assert b.per_step_trend == trend

    def test_single_step_correct_earns_exactly_one(self):
        for variant in (RewardVariant.ETR, RewardVariant.NAIVE_NO_GAMMA):
            b = compose_reward(
                True, EntropyTrajectory([2.0]), RewardConfig(variant=variant, lam=1.0)
            )
            assert b.total == 1.0
