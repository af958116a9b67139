import math

import numpy as np
import pytest

from etrlab.entropy import (
    DeltaSequence,
    DiscreteDistribution,
    EntropyTrajectory,
    entropy_deltas,
    segment_text,
    shannon_entropy,
    step_entropies,
)
from etrlab.errors import ValidationError
from etrlab.traces import Trace, TraceStep


def direct_entropy(probs, base=math.e):
    # independent oracle: plain summation
    return -sum(p * math.log(p, base) for p in probs if p > 0)


class TestDiscreteDistribution:
    def test_negative_entry_names_index(self):
        with pytest.raises(ValidationError, match="index 2"):
            DiscreteDistribution([0.6, 0.5, -0.1])

    def test_sum_off_by_more_than_tolerance(self):
        with pytest.raises(ValidationError, match="sum"):
            DiscreteDistribution([0.5, 0.5001])

    def test_sum_within_tolerance_accepted(self):
        DiscreteDistribution([0.5, 0.5 + 5e-10])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            DiscreteDistribution([])


class TestShannonEntropy:
    def test_uniform_four_outcomes(self):
        h = shannon_entropy(DiscreteDistribution([0.25] * 4))
        assert h == pytest.approx(math.log(4), abs=1e-12)
        assert h == pytest.approx(1.3863, abs=1e-4)

    def test_point_mass(self):
        assert shannon_entropy(DiscreteDistribution([1.0, 0.0, 0.0])) == 0.0

    def test_derived_mixed_distribution(self):
        # frozen from the direct-summation oracle
        h = shannon_entropy(DiscreteDistribution([0.5, 0.25, 0.25]))
        assert h == pytest.approx(1.0397207708399179, abs=1e-12)
        assert h == pytest.approx(direct_entropy([0.5, 0.25, 0.25]), abs=1e-12)

    def test_base_two(self):
        h = shannon_entropy(DiscreteDistribution([0.25] * 4), base="bits")
        assert h == pytest.approx(2.0, abs=1e-12)

    def test_bad_base_rejected(self):
        with pytest.raises(ValidationError):
            shannon_entropy(DiscreteDistribution([1.0]), base="dits")

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            raw = rng.uniform(0.01, 1.0, size=6)
            probs = list(raw / raw.sum())
            h = shannon_entropy(DiscreteDistribution(probs))
            rng.shuffle(probs)
            # renormalization residue is below the validation tolerance
            assert shannon_entropy(DiscreteDistribution(probs)) == pytest.approx(
                h, abs=1e-12
            )

    @pytest.mark.parametrize("k", [1, 2, 7, 64, 513, 1024])
    def test_uniform_equals_log_k(self, k):
        h = shannon_entropy(DiscreteDistribution([1.0 / k] * k))
        assert abs(h - math.log(k)) <= 1e-12

    def test_result_bounded_by_log_k(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            k = int(rng.integers(2, 20))
            raw = rng.uniform(0.0, 1.0, size=k)
            probs = raw / raw.sum()
            h = shannon_entropy(DiscreteDistribution(probs))
            assert 0.0 <= h <= math.log(k) + 1e-12

    def test_tiny_probabilities_treated_as_zero(self):
        h = shannon_entropy(DiscreteDistribution([1.0, 1e-310]))
        assert h == 0.0


def _trace(step_entropy_lists):
    return Trace(
        id="t",
        steps=tuple(TraceStep(token_entropies=tuple(v)) for v in step_entropy_lists),
    )


class TestStepEntropies:
    def test_single_step_mean(self):
        assert step_entropies(_trace([[2.0, 1.0]])).values == (1.5,)

    def test_singleton_steps_pass_through(self):
        traj = step_entropies(_trace([[3.0], [2.0], [1.0]]))
        assert traj.values == (3.0, 2.0, 1.0)

    def test_derived_per_step_mean(self):
        traj = step_entropies(_trace([[1.0, 3.0], [0.5, 0.5, 0.5]]))
        assert traj.values == (2.0, 0.5)

    def test_zero_token_step_names_index(self):
        class Step:
            token_entropies = ()

        class Bad:
            steps = [Step()]

        with pytest.raises(ValidationError, match="step 0"):
            step_entropies(Bad())

    def test_mean_idempotent_under_duplication(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            tokens = list(rng.uniform(0.0, 4.0, size=int(rng.integers(1, 6))))
            once = step_entropies(_trace([tokens])).values[0]
            doubled = step_entropies(_trace([tokens + tokens])).values[0]
            assert doubled == pytest.approx(once, abs=1e-12)


class TestEntropyDeltas:
    def test_constant_descent(self):
        traj = EntropyTrajectory([2.0, 1.5, 1.0])
        assert entropy_deltas(traj).deltas == (0.5, 0.5)

    def test_single_step_empty(self):
        assert entropy_deltas(EntropyTrajectory([1.0])).deltas == ()

    def test_derived_pairwise_subtraction(self):
        traj = EntropyTrajectory([1.0, 2.0, 0.5])
        deltas = entropy_deltas(traj).deltas
        assert deltas == (-1.0, 1.5)

    def test_telescoping_sum(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            t = int(rng.integers(1, 30))
            traj = EntropyTrajectory(rng.uniform(0.0, 5.0, size=t))
            total = math.fsum(entropy_deltas(traj).deltas)
            assert abs(total - (traj.values[0] - traj.values[-1])) <= 1e-12


class TestTrajectoryValidation:
    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            EntropyTrajectory([])

    def test_negative_rejected(self):
        with pytest.raises(ValidationError, match="step 2"):
            EntropyTrajectory([1.0, -0.5])


class TestSegmentText:
    def test_clean_delimiters(self):
        assert segment_text("a\n\nb\n\nc") == ["a", "b", "c"]

    def test_no_delimiter(self):
        assert segment_text("a") == ["a"]

    def test_consecutive_delimiters_collapse(self):
        assert segment_text("a\n\n\n\nb") == ["a", "b"]

    def test_empty_input(self):
        assert segment_text("") == []

    def test_whitespace_only_segments_dropped(self):
        assert segment_text("a\n\n   \n\nb") == ["a", "b"]

    def test_rejoin_idempotence(self):
        for raw in ["a\n\nb", "x\n\n\n\ny\n\nz", "one", "a \n\n b\n\n\n\nc"]:
            once = segment_text(raw)
            again = segment_text("\n\n".join(once))
            assert once == again
