import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relctl.errors import DataError, UndefinedMetricError
from relctl.metrics import (
    ReliabilityState,
    brier,
    downside_volatility,
    ece,
    roc_auc,
    volatility_l1,
    volatility_summary,
)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return total / (len(pos) * len(neg))


def loop_volatility(a, c):
    total = 0.0
    for t in range(1, len(a)):
        total += abs(a[t] - a[t - 1]) + abs(c[t] - c[t - 1])
    return total / (len(a) - 1)


def states(a, c):
    return [ReliabilityState(x, y, 0.1) for x, y in zip(a, c)]


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert roc_auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_pair_enumeration_example(self):
        scores, labels = (0.1, 0.4, 0.35, 0.8), (0, 0, 1, 1)
        assert pairwise_auc(scores, labels) == 0.75
        assert roc_auc(scores, labels) == 0.75

    @pytest.mark.parametrize("labels", [[1, 1, 1], [0, 0, 0]])
    def test_single_class_is_an_error(self, labels):
        with pytest.raises(UndefinedMetricError, match="undefined AUC"):
            roc_auc([0.1, 0.2, 0.3], labels)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            roc_auc([0.1, 0.2], [0, 1, 1])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 1)), min_size=2, max_size=40))
    def test_matches_pairs_with_ties(self, rows):
        scores = [s / 10 for s, _ in rows]
        labels = [y for _, y in rows]
        if len(set(labels)) < 2:
            return
        assert abs(roc_auc(scores, labels) - pairwise_auc(scores, labels)) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_rank_invariance_and_label_flip(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=30)
        y = np.r_[0, 1, rng.integers(0, 2, 28)]
        auc = roc_auc(s, y)
        assert roc_auc(np.exp(3 * s) + 1, y) == pytest.approx(auc, abs=1e-12)
        assert auc + roc_auc(s, 1 - y) == pytest.approx(1.0, abs=1e-12)


class TestEce:
    def test_constant_half_is_calibrated(self):
        assert ece([0.5] * 4, [0, 1, 0, 1]) == 0.0

    def test_maximal_miscalibration(self):
        assert ece([1.0, 1.0, 1.0], [0, 0, 0]) == 1.0

    def test_bin_by_bin_example(self):
        # 0.1 -> bin 1 (mean label 0.5), 0.9 -> bin 13 (mean label 1.0); weights 2/4 each
        expected = 0.5 * abs(0.5 - 0.1) + 0.5 * abs(1.0 - 0.9)
        assert ece([0.1, 0.1, 0.9, 0.9], [0, 1, 1, 1]) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.25)

    def test_top_edge_lands_in_last_bin(self):
        # 1.0 and 0.95 share the last of 10 bins: mean prob 0.975, mean label 0.5
        assert ece([1.0, 0.95], [1, 0], n_bins=10) == pytest.approx(0.475)

    def test_empty_is_an_error(self):
        with pytest.raises(DataError):
            ece([], [])

    def test_zero_when_bins_are_calibrated(self):
        probs = [0.25] * 4 + [0.75] * 4
        labels = [1, 0, 0, 0, 1, 1, 1, 0]
        assert ece(probs, labels) == pytest.approx(0.0, abs=1e-15)


class TestBrier:
    def test_exact(self):
        assert brier([0, 1, 1], [0, 1, 1]) == 0.0

    def test_constant_half(self):
        assert brier([0.5] * 3, [1, 0, 0]) == 0.25

    def test_two_points(self):
        assert brier([0.2, 0.7], [0, 1]) == pytest.approx(0.065)

    @given(st.floats(0, 1), st.lists(st.integers(0, 1), min_size=1, max_size=20))
    def test_constant_probability(self, p, labels):
        direct = sum((p - y) ** 2 for y in labels) / len(labels)
        assert brier([p] * len(labels), labels) == pytest.approx(direct, abs=1e-12)


class TestVolatility:
    def test_constant_trajectory(self):
        s = states([0.7] * 5, [0.05] * 5)
        assert volatility_l1(s) == 0.0
        assert downside_volatility(s) == 0.0

    def test_two_windows(self):
        assert volatility_l1(states([0.6, 0.7], [0.10, 0.12])) == pytest.approx(0.12)

    def test_needs_two_windows(self):
        with pytest.raises(DataError):
            volatility_l1(states([0.6], [0.1]))
        with pytest.raises(DataError):
            downside_volatility(states([0.6], [0.1]))

    def test_improving_trajectory_has_no_downside(self):
        s = states([0.6, 0.65, 0.7], [0.1, 0.08, 0.05])
        assert downside_volatility(s, "per-component") == 0.0
        assert downside_volatility(s, "joint-auc") == 0.0

    def test_auc_drop_both_modes(self):
        s = states([0.7, 0.6], [0.1, 0.1])
        assert downside_volatility(s, "per-component") == pytest.approx(0.1)
        assert downside_volatility(s, "joint-auc") == pytest.approx(0.1)

    def test_modes_diverge(self):
        s = states([0.6, 0.7], [0.10, 0.15])
        assert downside_volatility(s, "per-component") == pytest.approx(0.05)
        assert downside_volatility(s, "joint-auc") == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=15))
    def test_loop_oracle_and_ordering(self, pairs):
        a = [p[0] for p in pairs]
        c = [p[1] for p in pairs]
        s = states(a, c)
        v = volatility_l1(s)
        assert abs(v - loop_volatility(a, c)) < 1e-12
        assert downside_volatility(s, "per-component") <= v + 1e-15
        assert downside_volatility(s, "joint-auc") <= v + 1e-15

    def test_equal_when_every_step_degrades_both(self):
        s = states([0.8, 0.75, 0.7, 0.6], [0.01, 0.02, 0.05, 0.06])
        assert downside_volatility(s) == pytest.approx(volatility_l1(s), abs=1e-15)

    def test_summary(self):
        summary = volatility_summary(states([0.7, 0.6, 0.65], [0.1, 0.1, 0.1]))
        assert summary.horizon_T == 3
        assert summary.v_l1 == pytest.approx(0.075)
        assert summary.v_l1_downside == pytest.approx(0.05)


def test_state_rejects_out_of_range():
    with pytest.raises(DataError):
        ReliabilityState(1.2, 0.1, 0.1)
    with pytest.raises(DataError):
        ReliabilityState(0.5, float("nan"), 0.1)
