import math

import numpy as np
import pytest

from mlrboost.boosters import (
    ALPHA_BOUND,
    AdaOLMR,
    LossTracker,
    OlmrState,
    OnlineBMR,
    ProtocolError,
    empirical_edge,
    ogd_regret_audit,
    ogd_slope,
    ogd_step,
)
from mlrboost.core import LabelSet, make_baseline
from mlrboost.losses import LossKind, logistic_loss, rank_loss
from mlrboost.simulation import adversary_rounds, run_rounds
from mlrboost.weak_learners import OracleEdgeLearner, SimulatedInstance, WeakLearner


def Y1(labels, k):
    return LabelSet.from_labels(labels, k)


class Fixed(WeakLearner):
    """Always predicts the same distribution and remembers what it was taught."""

    def __init__(self, p):
        self.p = np.asarray(p, dtype=float)
        self.k = self.p.size
        self.seen = []

    def predict(self, x):
        return self.p.copy()

    def learn(self, x, Y, cost, importance):
        self.seen.append((np.array(cost), importance))


class TestLossTracker:
    def test_means(self):
        tr = LossTracker(window=2)
        for v in (1.0, 0.0, 0.5):
            tr.add(v)
        assert tr.mean == pytest.approx(0.5)
        assert tr.window_mean == pytest.approx(0.25)

    def test_empty(self):
        assert LossTracker().mean == 0.0 == LossTracker().window_mean


class TestOnlineBMR:
    def test_single_perfect_learner(self):
        b = OnlineBMR([Fixed([1, 0])], 2, 0.1)
        np.testing.assert_array_equal(b.predict({}), [1, 0])
        assert b.update(Y1([1], 2)) == 0

    def test_uninformative_votes_tie(self):
        b = OnlineBMR([Fixed([0.5, 0.5]), Fixed([0.5, 0.5])], 2, 0.1)
        np.testing.assert_array_equal(b.predict({}), [1, 1])
        assert b.update(Y1([1], 2)) == 0.5

    def test_prediction_is_unweighted_sum(self):
        rng = np.random.default_rng(0)
        P = rng.dirichlet(np.ones(4), size=5)
        b = OnlineBMR([Fixed(p) for p in P], 4, 0.2, loss=LossKind.HINGE)
        np.testing.assert_allclose(b.predict({}), P.sum(axis=0))

    def test_costs_and_importances(self):
        learners = [Fixed([0.5, 0.5]) for _ in range(3)]
        b = OnlineBMR(learners, 2, 0.2, loss=LossKind.RANK)
        b.predict({})
        b.update(Y1([1], 2))
        rec = b.last_round
        # last learner sees the bare loss at s = (1, 1) plus one vote
        np.testing.assert_allclose(rec.costs[-1], [0, 1])
        assert np.all((rec.importances >= 0) & (rec.importances <= 1))
        for learner in learners:
            cost, imp = learner.seen[0]
            assert cost.min() == pytest.approx(0) and cost.max() == pytest.approx(1)
            assert imp == pytest.approx(1.0)

    def test_raw_cost_toggle(self):
        learner = Fixed([0.5, 0.5])
        b = OnlineBMR([learner, Fixed([0.5, 0.5])], 2, 0.2, loss=LossKind.RANK, normalize_importance=False)
        b.predict({})
        b.update(Y1([1], 2))
        cost, imp = learner.seen[0]
        np.testing.assert_allclose(cost, [0.2, 0.7])
        assert imp == 1.0

    def test_protocol(self):
        b = OnlineBMR([Fixed([1, 0])], 2, 0.1)
        with pytest.raises(ProtocolError):
            b.update(Y1([1], 2))
        b.predict({})
        with pytest.raises(ProtocolError):
            b.predict({})
        b.update(Y1([1], 2))
        with pytest.raises(ProtocolError):
            b.update(Y1([1], 2))

    def test_rejects_non_distribution(self):
        b = OnlineBMR([Fixed([0.7, 0.7])], 2, 0.1)
        with pytest.raises(ValueError):
            b.predict({})

    @pytest.mark.parametrize("gamma", [0.0, 1.0])
    def test_requires_gamma(self, gamma):
        with pytest.raises(ValueError):
            OnlineBMR([Fixed([1, 0])], 2, gamma)

    def test_requires_learners(self):
        with pytest.raises(ValueError):
            OnlineBMR([], 2, 0.1)


class TestOgd:
    def test_step_examples(self):
        assert ogd_step(0.0, 0.3, 1) == pytest.approx(-0.3)
        assert ogd_step(-1.9, 0.3, 1) == -2.0
        assert ogd_step(1.0, -4.0, 4) == 2.0

    def test_slope_is_derivative(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            k = int(rng.integers(2, 7))
            Y = LabelSet(frozenset(rng.choice(k, size=int(rng.integers(1, k)), replace=False).tolist()), k)
            s, h, a = rng.normal(scale=2, size=k), rng.dirichlet(np.ones(k)), rng.uniform(-2, 2)
            f = lambda al: logistic_loss(Y, s + al * h)
            fd = (f(a + 1e-5) - f(a - 1e-5)) / 2e-5
            slope = ogd_slope(Y, s, h, a)
            assert slope == pytest.approx(fd, abs=1e-6)
            assert abs(slope) <= 1

    def test_audit_constant_losses(self):
        Y = Y1([1], 3)
        seq = [(Y, np.zeros(3), np.full(3, 1 / 3))] * 100
        audit = ogd_regret_audit(seq)
        assert audit.regret == pytest.approx(0.0, abs=1e-9)
        assert audit.cumulative_loss == pytest.approx(100 * math.log(2))

    def test_audit_alternating(self):
        Y = Y1([1], 2)
        seq = [(Y, np.zeros(2), np.array([1.0, 0.0]) if t % 2 else np.array([0.0, 1.0])) for t in range(400)]
        audit = ogd_regret_audit(seq)
        assert audit.regret <= 9 * math.sqrt(400)
        assert -ALPHA_BOUND <= audit.best_alpha <= ALPHA_BOUND

    def test_audit_empty(self):
        with pytest.raises(ValueError):
            ogd_regret_audit([])


class TestAdaOLMR:
    def test_first_round_predicts_zero(self):
        rng = np.random.default_rng(1)
        b = AdaOLMR([Fixed(rng.dirichlet(np.ones(3))) for _ in range(4)], 3, seed=0)
        np.testing.assert_array_equal(b.predict({}), np.zeros(3))
        assert b.update(Y1([2], 3)) == 0.5

    def test_hedge_update(self):
        b = AdaOLMR([Fixed([1, 0]), Fixed([1, 0])], 2, seed=0)
        b.state.alpha = np.array([1.0, -2.0])
        b.predict({})
        b.update(Y1([1], 2))
        np.testing.assert_allclose(b.state.v, [1.0, math.exp(-1)])
        np.testing.assert_allclose(b.state.expert_probs, np.array([1, math.exp(-1)]) / (1 + math.exp(-1)))

    def test_alpha_update_uses_next_gradient(self):
        h = np.array([0.7, 0.2, 0.1])
        b = AdaOLMR([Fixed(h), Fixed([0.1, 0.1, 0.8])], 3, seed=0)
        b.state.alpha = np.array([0.5, -0.4])
        Y = Y1([1], 3)
        b.predict({})
        b.update(Y)
        s1 = 0.5 * h
        expected = ogd_step(0.5, ogd_slope(Y, np.zeros(3), h, 0.5), 1)
        assert b.state.alpha[0] == pytest.approx(expected)
        expected_last = ogd_step(-0.4, ogd_slope(Y, s1, np.array([0.1, 0.1, 0.8]), -0.4), 1)
        assert b.state.alpha[1] == pytest.approx(expected_last)
        assert b.state.t == 2

    def test_alpha_stays_bounded_and_probs_simplex(self):
        learners = [OracleEdgeLearner(0.3, seed=s) for s in range(6)]
        b = AdaOLMR(learners, 4, seed=1)
        for t, Y, value in run_rounds(b, adversary_rounds(4, 300, 2)):
            assert np.all(np.abs(b.state.alpha) <= ALPHA_BOUND)
            p = b.state.expert_probs
            assert abs(p.sum() - 1) < 1e-12 and p.min() > 0
            assert 0 <= value <= 1

    def test_degenerate_rounds_change_nothing(self):
        b = AdaOLMR([OracleEdgeLearner(0.2, seed=s) for s in range(3)], 3, seed=0)
        for _ in run_rounds(b, adversary_rounds(3, 20, 1)):
            pass
        snap = (b.state.alpha.copy(), b.state.log_v.copy(), b.state.t, b.state.cum_weight.copy())
        for labels in ([], [1, 2, 3]):
            Y = Y1(labels, 3)
            b.predict(SimulatedInstance(Y, 0))
            assert b.update(Y) == 0
            assert np.all(b.last_round.importances == 0)
        np.testing.assert_array_equal(b.state.alpha, snap[0])
        np.testing.assert_array_equal(b.state.log_v, snap[1])
        assert b.state.t == snap[2]
        np.testing.assert_array_equal(b.state.cum_weight, snap[3])

    def test_baseline_learners_have_exact_edge(self):
        for gamma in (0.0, 0.15):
            b = AdaOLMR([OracleEdgeLearner(gamma, seed=s, sample=False) for s in range(3)], 5, seed=3)
            for _ in run_rounds(b, adversary_rounds(5, 300, 4)):
                pass
            for e in b.empirical_edges():
                assert e == pytest.approx(gamma, abs=1e-9)

    def test_sampled_oracle_edges_concentrate(self):
        T, gamma, ok = 1500, 0.2, 0
        for seed in range(20):
            b = AdaOLMR([OracleEdgeLearner(gamma, seed=100 + seed * 3 + j) for j in range(3)], 4, seed=seed)
            for _ in run_rounds(b, adversary_rounds(4, T, 500 + seed)):
                pass
            ok += all(e >= gamma - 3 / math.sqrt(T) for e in b.empirical_edges())
        assert ok >= 19

    def test_recorded_ogd_sequences_have_small_regret(self):
        b = AdaOLMR([OracleEdgeLearner(0.2, seed=s) for s in range(3)], 4, seed=5, record_ogd=True)
        for _ in run_rounds(b, adversary_rounds(4, 400, 6)):
            pass
        for seq in b.ogd_records:
            assert len(seq) == 400
            assert ogd_regret_audit(seq).regret <= 9 * math.sqrt(400)

    def test_expert_losses_tracked(self):
        b = AdaOLMR([OracleEdgeLearner(0.2, seed=s) for s in range(3)], 3, seed=0)
        for _ in run_rounds(b, adversary_rounds(3, 50, 0)):
            pass
        assert b.expert_mean_losses.shape == (3,)
        assert np.all((b.expert_mean_losses >= 0) & (b.expert_mean_losses <= 1))
        assert b.last_expert in (1, 2, 3)

    def test_seeded_reproducible(self):
        def run():
            b = AdaOLMR([OracleEdgeLearner(0.2, seed=s) for s in range(4)], 4, seed=9)
            return [v for _, _, v in run_rounds(b, adversary_rounds(4, 100, 9))]

        assert run() == run()


class TestEmpiricalEdge:
    def test_direct_formula(self):
        st = OlmrState.initial(1)
        c, h = np.array([-0.5, 0.25, 0.25]), np.array([1.0, 0.0, 0.0])
        st.cum_cost_dot[0] += c @ h
        st.cum_weight[0] += 0.5
        assert empirical_edge(st, 0) == pytest.approx(1.0)

    def test_absent_without_weight(self):
        assert empirical_edge(OlmrState.initial(2), 1) is None

    def test_initial_state(self):
        st = OlmrState.initial(3)
        np.testing.assert_array_equal(st.v, np.ones(3))
        assert st.t == 1
