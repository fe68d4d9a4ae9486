import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyric.autodiff import Tape, backward, grad_check, value_of
from pyric.loss import (ConfusionCounts, UndefinedScoreError, edi, edi_loss, edi_value, hard_counts,
                        soft_counts)


def _counts_for(h, f, n=10**6):
    """Counts with exact hit rate h and false-alarm rate f."""
    return ConfusionCounts(h * n, (1 - h) * n, f * n, (1 - f) * n, soft=True)


def _edi_formula(h, f):
    return (math.log(f) - math.log(h)) / (math.log(f) + math.log(h))


class TestHardCounts:
    def test_fixture(self):
        c = hard_counts([1, 3, 5, 7], [0, 0, 1, 1], 4)
        assert (c.hits, c.misses, c.false_alarms, c.correct_negatives) == (2, 0, 0, 2)

    def test_threshold_is_strict(self):
        c = hard_counts([4.0], [1], 4.0)
        assert c.misses == 1

    def test_misaligned_series(self):
        with pytest.raises(ValueError):
            hard_counts([1, 2], [1], 0.0)

    def test_non_binary_observations(self):
        with pytest.raises(ValueError):
            hard_counts([1, 2], [0, 2], 0.0)


class TestEdi:
    def test_reference_value(self):
        assert edi(_counts_for(0.8, 0.1)).value == pytest.approx(0.8233, abs=1e-4)
        assert edi(_counts_for(0.8, 0.1)).value == pytest.approx(_edi_formula(0.8, 0.1), abs=1e-9)

    def test_no_skill_is_zero(self):
        for r in (0.1, 0.37, 0.9):
            assert abs(edi(_counts_for(r, r)).value) <= 1e-6

    def test_perfect_limit(self):
        s = edi(ConfusionCounts(50, 0, 0, 950))
        assert s.value == pytest.approx(1.0, abs=1e-6)
        assert s.degenerate

    def test_undefined_without_fire(self):
        with pytest.raises(UndefinedScoreError):
            edi(ConfusionCounts(0, 0, 3, 7))
        with pytest.raises(UndefinedScoreError):
            edi(ConfusionCounts(3, 7, 0, 0))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_antisymmetric_under_swap(self, h, f):
        a = edi(_counts_for(h, f)).value
        b = edi(_counts_for(f, h)).value
        assert a == pytest.approx(-b, abs=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 50), st.integers(0, 50), st.integers(0, 50), st.integers(1, 50))
    def test_bounded(self, a, b, c, d):
        assert -1.0 <= edi(ConfusionCounts(a, b, c, d)).value <= 1.0


class TestSoftCounts:
    def test_large_beta_matches_hard_counts(self):
        rng = np.random.default_rng(3)
        idx = rng.uniform(0, 100, 200)
        obs = (rng.random(200) < 0.2).astype(float)
        thr = 50.0
        idx = idx[np.abs(idx - thr) > 0.5]
        obs = obs[: idx.size]
        soft = soft_counts(idx, obs, thr, beta=1000.0).numeric()
        hard = hard_counts(idx, obs, thr)
        assert soft.hits == pytest.approx(hard.hits, abs=1e-6)
        assert soft.false_alarms == pytest.approx(hard.false_alarms, abs=1e-6)

    def test_list_of_nodes_equals_lane_node(self):
        idx = np.array([10.0, 40.0, 60.0, 90.0])
        obs = np.array([0, 1, 0, 1])
        t = Tape()
        lane = t.variable(idx)
        scalars = [t.variable(v) for v in idx]
        a = value_of(edi_loss(lane, obs, 50.0, 0.1))
        b = value_of(edi_loss(scalars, obs, 50.0, 0.1))
        assert a == pytest.approx(b, abs=1e-12)

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            soft_counts([1.0], [1], 0.0, beta=0.0)


class TestLossGradient:
    def test_single_index_gradient(self):
        obs = np.array([1, 0, 0, 1, 0])

        def f(t, xs):
            return edi_loss([xs[i] for i in range(5)], obs, 50.0, 0.2)

        rep = grad_check(f, [55.0, 48.0, 20.0, 61.0, 52.0], step=1e-5, tolerance=1e-4)
        assert rep.passed, rep

    def test_raising_a_fire_index_lowers_the_loss(self):
        obs = np.array([1, 0, 0, 1, 0])
        t = Tape()
        x = t.variable(np.array([55.0, 48.0, 20.0, 61.0, 52.0]))
        g = backward(edi_loss(x, obs, 50.0, 0.2), clip_limit=None)
        assert g[x][0] < 0 and g[x][3] < 0
        assert g[x][1] > 0 and g[x][4] > 0

    def test_edi_value_on_numbers(self):
        assert edi_value(_counts_for(0.8, 0.1)) == pytest.approx(_edi_formula(0.8, 0.1))
