import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from byzest.aggregation import (
    MessageSet,
    capped_convex_feasible,
    coordinate_survivors,
    coordinate_trimmed_aggregate,
    feasible_mean_range,
    trimmed_mean_batch,
    trimmed_mean_scalar,
    trimmed_mean_stack,
)
from byzest.errors import AggregationError
from oracles import oracle_feasible_range_lp, oracle_trimmed_mean


class TestTrimmedMeanScalar:
    def test_middle_three(self):
        mean, kept = trimmed_mean_scalar([(i, v) for i, v in enumerate([1, 2, 3, 4, 5])], 1)
        assert mean == 3.0
        assert kept == {1, 2, 3}

    def test_constant_input(self):
        for b in (0, 1, 2):
            mean, _ = trimmed_mean_scalar([(i, 7.5) for i in range(2 * b + 1)], b)
            assert mean == 7.5

    def test_no_trim_is_mean(self):
        values = [(0, 1.0), (1, 4.0), (2, -2.0)]
        mean, kept = trimmed_mean_scalar(values, 0)
        assert mean == 1.0
        assert kept == {0, 1, 2}

    def test_positional_removal_of_duplicates(self):
        # (5,5,5,1) with b=1: one 5 and the 1 are removed
        mean, kept = trimmed_mean_scalar([(0, 5.0), (1, 5.0), (2, 5.0), (3, 1.0)], 1)
        assert mean == 5.0
        assert kept == {0, 1}  # ties broken by sender id

    def test_too_few_values(self):
        with pytest.raises(AggregationError):
            trimmed_mean_scalar([(0, 1.0), (1, 2.0)], 1)

    def test_matches_oracle_fuzz(self, rng):
        for _ in range(2_000):
            b = int(rng.integers(0, 11))
            n = int(rng.integers(2 * b + 1, 51))
            values = rng.choice(
                [rng.normal(), rng.integers(-3, 4), 1e9, -1e9, 0.0], size=n
            ).astype(float)
            mean, _ = trimmed_mean_scalar(list(enumerate(values)), b)
            assert mean == oracle_trimmed_mean(values, b)

    def test_extreme_values_fully_trimmed(self, rng):
        # b planted values above the max and b below the min never touch
        # the aggregate: trimming with b recovers the honest mean.
        for _ in range(10_000):
            b = int(rng.integers(1, 4))
            n = int(rng.integers(b + 1, 12))
            good = rng.normal(size=n) * 10
            spread = good.max() - good.min() + 1.0
            fakes = [good.max() + spread * (k + 1) for k in range(b)]
            fakes += [good.min() - spread * (k + 1) for k in range(b)]
            combined = list(enumerate(np.concatenate([good, fakes])))
            mean, kept = trimmed_mean_scalar(combined, b)
            assert kept == set(range(n))
            assert mean == pytest.approx(sum(sorted(good)) / n, abs=1e-12)

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=15),
        st.integers(min_value=0, max_value=3),
    )
    @settings(max_examples=300)
    def test_permutation_invariance(self, values, b):
        if len(values) < 2 * b + 1:
            return
        pairs = list(enumerate(values))
        mean, kept = trimmed_mean_scalar(pairs, b)
        shuffled = pairs[::-1]
        mean2, kept2 = trimmed_mean_scalar(shuffled, b)
        assert mean == mean2
        assert kept == kept2


class TestCoordinateAggregate:
    def test_d1_reduces_to_scalar(self, rng):
        for _ in range(200):
            b = int(rng.integers(0, 3))
            n = int(rng.integers(2 * b + 1, 12))
            values = rng.normal(size=n)
            msgs = MessageSet([(i, [values[i]]) for i in range(n)])
            agg = coordinate_trimmed_aggregate(msgs, b)
            mean, _ = trimmed_mean_scalar(list(enumerate(values)), b)
            assert agg[0] == mean

    def test_three_messages(self):
        msgs = MessageSet([(0, [0.0, 0.0]), (1, [1.0, 2.0]), (2, [2.0, 4.0])])
        assert np.array_equal(coordinate_trimmed_aggregate(msgs, 1), [1.0, 2.0])

    def test_survivors_differ_per_coordinate(self):
        msgs = MessageSet([(0, [0.0, 9.0]), (1, [5.0, 5.0]), (2, [9.0, 0.0])])
        kept = coordinate_survivors(msgs, 1)
        assert kept == [{1}, {1}]
        msgs = MessageSet([(0, [0.0, 5.0]), (1, [5.0, 0.0]), (2, [9.0, 9.0])])
        assert coordinate_survivors(msgs, 1) == [{1}, {0}]

    def test_extreme_attack_stays_in_good_range(self, rng):
        # adversary beyond both extremes with |A| <= b: aggregate confined
        for _ in range(500):
            phi = int(rng.integers(3, 9))
            b = int(rng.integers(1, 3))
            n_faulty = int(rng.integers(1, b + 1))
            if phi + n_faulty < 2 * b + 1:
                continue
            good = rng.normal(size=(phi, 2)) * 5
            entries = [(i, good[i]) for i in range(phi)]
            attack = np.array([1e6, -1e6])
            entries += [(phi + j, attack) for j in range(n_faulty)]
            agg = coordinate_trimmed_aggregate(MessageSet(entries), b)
            for k in range(2):
                assert good[:, k].min() - 1e-9 <= agg[k] <= good[:, k].max() + 1e-9

    def test_stack_matches_reference(self, rng):
        for _ in range(300):
            b = int(rng.integers(0, 4))
            n = int(rng.integers(2 * b + 1, 16))
            d = int(rng.integers(1, 6))
            values = rng.normal(size=(n, d)) * 100
            msgs = MessageSet([(i, values[i]) for i in range(n)])
            ref = coordinate_trimmed_aggregate(msgs, b)
            fast = trimmed_mean_stack(values, b)
            assert np.allclose(fast, ref, atol=1e-12, rtol=1e-12)

    def test_batch_shape(self, rng):
        values = rng.normal(size=(4, 5, 3))
        out = trimmed_mean_batch(values, 1)
        assert out.shape == (4, 3)
        for r in range(4):
            assert np.allclose(out[r], trimmed_mean_stack(values[r], 1), atol=1e-12)

    def test_message_set_validation(self):
        with pytest.raises(Exception):
            MessageSet([(0, [1.0, 2.0]), (1, [1.0])])
        with pytest.raises(AggregationError):
            MessageSet([])


class TestFeasibilityOracle:
    def test_uniform_mean_feasible(self, rng):
        for _ in range(100):
            phi = int(rng.integers(3, 10))
            b = int(rng.integers(0, (phi - 1) // 2 + 1))
            values = rng.normal(size=phi)
            assert capped_convex_feasible(values, values.mean(), phi, b, atol=1e-12)

    def test_above_max_infeasible(self, rng):
        values = [0.0, 1.0, 2.0]
        assert not capped_convex_feasible(values, 2.5, 3, 1)

    def test_cap_packing_example(self):
        values = [0.0, 0.0, 9.0]
        assert feasible_mean_range(values, 1) == (0.0, 4.5)
        assert capped_convex_feasible(values, 4.5, 3, 1)
        assert not capped_convex_feasible(values, 4.6, 3, 1)

    def test_range_matches_lp_oracle(self, rng):
        for _ in range(50):
            phi = int(rng.integers(2, 9))
            b = int(rng.integers(0, phi))
            values = rng.normal(size=phi) * 10
            lo, hi = feasible_mean_range(values, b)
            lp_lo, lp_hi = oracle_feasible_range_lp(values, b)
            assert lo == pytest.approx(lp_lo, abs=1e-7)
            assert hi == pytest.approx(lp_hi, abs=1e-7)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            feasible_mean_range([1.0, 2.0], 2)
        with pytest.raises(ValueError):
            capped_convex_feasible([1.0], 1.0, 2, 0)
