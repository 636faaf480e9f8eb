import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlrboost.core import LabelSet
from mlrboost.losses import (
    LossKind,
    adaptive_weight,
    hinge_loss,
    logistic_gradient,
    logistic_loss,
    loss,
    pair_weight,
    rank_loss,
)
from oracles import central_difference, naive_loss


def Y1(labels, k):
    return LabelSet.from_labels(labels, k)


@st.composite
def instances(draw, max_k=7, scale=5.0):
    k = draw(st.integers(2, max_k))
    members = draw(st.sets(st.integers(0, k - 1), min_size=1, max_size=k - 1))
    s = draw(arrays(float, k, elements=st.floats(-scale, scale)))
    return LabelSet(frozenset(members), k), s


class TestLossKind:
    def test_parse(self):
        assert LossKind.parse("Hinge") is LossKind.HINGE
        assert LossKind.parse(LossKind.RANK) is LossKind.RANK
        with pytest.raises(ValueError):
            LossKind.parse("squared")


class TestExamples:
    def test_rank(self):
        assert rank_loss(Y1([1], 3), [2, 1, 0]) == 0
        assert rank_loss(Y1([1], 2), [0, 0]) == 0.5
        assert rank_loss(Y1([1, 2], 3), [0, 1, 2]) == 1

    def test_hinge(self):
        assert hinge_loss(Y1([1], 2), [0, 0]) == 1
        assert hinge_loss(Y1([1], 2), [2, 0]) == 0
        assert hinge_loss(Y1([1, 2], 3), [1, 0, 1]) == pytest.approx(1.5)

    def test_logistic(self):
        assert logistic_loss(Y1([1], 2), [0, 0]) == pytest.approx(math.log(2), abs=1e-12)
        assert logistic_loss(Y1([1], 2), [100, 0]) < 1e-40
        assert logistic_loss(Y1([1, 2], 3), [0, 0, 0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_logistic_large_margin_is_finite(self):
        assert logistic_loss(Y1([1], 2), [0, 1000]) == pytest.approx(1000.0)

    def test_gradient(self):
        np.testing.assert_allclose(logistic_gradient(Y1([1], 3), [0, 0, 0]), [-0.5, 0.25, 0.25])
        np.testing.assert_allclose(logistic_gradient(Y1([1], 2), [100, 0]), [0, 0], atol=1e-40)

    def test_adaptive_weight(self):
        assert adaptive_weight([-0.5, 0.25, 0.25], Y1([1], 3)) == pytest.approx(0.5)
        assert adaptive_weight(np.zeros(4)) == 0

    def test_tie_tolerance(self):
        assert rank_loss(Y1([1], 2), [0.0, 1e-10]) == 0.5
        assert rank_loss(Y1([1], 2), [0.0, 1e-8]) == 1.0

    def test_dispatch(self):
        Y, s = Y1([2], 3), np.array([0.3, -0.1, 0.7])
        for kind, f in ((LossKind.RANK, rank_loss), (LossKind.HINGE, hinge_loss), (LossKind.LOGISTIC, logistic_loss)):
            assert loss(kind, Y, s) == f(Y, s)


class TestDegenerate:
    @pytest.mark.parametrize("labels", [[], [1, 2, 3]])
    def test_zero_everything(self, labels):
        Y = Y1(labels, 3)
        s = np.array([0.5, -1.0, 2.0])
        assert pair_weight(Y) == 0
        assert rank_loss(Y, s) == hinge_loss(Y, s) == logistic_loss(Y, s) == 0
        np.testing.assert_array_equal(logistic_gradient(Y, s), np.zeros(3))

    def test_batched_degenerate(self):
        out = rank_loss(Y1([], 3), np.zeros((4, 3)))
        assert out.shape == (4,)


class TestBatching:
    def test_matches_rowwise(self):
        rng = np.random.default_rng(0)
        Y = Y1([1, 4], 5)
        S = rng.normal(size=(6, 5))
        for f in (rank_loss, hinge_loss, logistic_loss):
            np.testing.assert_allclose(f(Y, S), [f(Y, s) for s in S])
        np.testing.assert_allclose(logistic_gradient(Y, S), np.vstack([logistic_gradient(Y, s) for s in S]))


class TestProperties:
    @given(instances())
    def test_match_naive_pair_loops(self, inst):
        Y, s = inst
        members = sorted(Y.members)
        assert rank_loss(Y, s) == pytest.approx(naive_loss("rank", members, Y.k, s)[0], abs=1e-12)
        assert hinge_loss(Y, s) == pytest.approx(naive_loss("hinge", members, Y.k, s)[0], abs=1e-12)
        assert logistic_loss(Y, s) == pytest.approx(naive_loss("logistic", members, Y.k, s)[0], abs=1e-12)

    @given(instances())
    def test_hinge_dominates_rank(self, inst):
        Y, s = inst
        r = rank_loss(Y, s)
        assert 0 <= r <= 1
        assert hinge_loss(Y, s) >= r

    @given(instances(), st.floats(-10, 10))
    def test_rank_shift_invariant(self, inst, shift):
        Y, s = inst
        # integer-valued scores keep ties exact under a shift
        s = np.round(s)
        assert rank_loss(Y, s + round(shift)) == rank_loss(Y, s)

    @given(instances())
    def test_rank_monotone_transform_invariant(self, inst):
        Y, s = inst
        s = np.round(s, 1)
        assert rank_loss(Y, np.exp(s) * 3 + 1) == rank_loss(Y, s)

    @given(instances(), instances(), st.floats(0, 1))
    def test_logistic_convex(self, a, b, lam):
        Y, s1 = a
        _, s2 = b
        if s2.size != s1.size:
            return
        mid = logistic_loss(Y, lam * s1 + (1 - lam) * s2)
        assert mid <= lam * logistic_loss(Y, s1) + (1 - lam) * logistic_loss(Y, s2) + 1e-9

    @given(instances())
    def test_gradient_signs_and_sum(self, inst):
        Y, s = inst
        g = logistic_gradient(Y, s)
        assert abs(g.sum()) < 1e-12
        assert np.all(g[Y.relevant] <= 0) and np.all(g[Y.irrelevant] >= 0)

    @settings(max_examples=200)
    @given(instances())
    def test_gradient_central_difference(self, inst):
        Y, s = inst
        fd = central_difference(lambda v: logistic_loss(Y, v), s)
        np.testing.assert_allclose(logistic_gradient(Y, s), fd, atol=1e-6)

    @given(instances())
    def test_weight_identities(self, inst):
        Y, s = inst
        g = logistic_gradient(Y, s)
        w = adaptive_weight(g, Y)
        assert w == pytest.approx(-g[Y.relevant].sum(), abs=1e-9)
        assert w == pytest.approx(g[Y.irrelevant].sum(), abs=1e-9)
        assert w >= 0.5 * rank_loss(Y, s) - 1e-12
