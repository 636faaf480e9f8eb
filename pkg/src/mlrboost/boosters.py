"""Online boosters for multi-label ranking.

Both boosters follow the same round protocol: ``predict(x)`` gathers the weak
predictions, forms the expert scores ``S[j] = sum_{i<=j} alpha_i h_i`` (with
``S[0] = 0``) and returns one of them; ``update(Y)`` then computes per-learner
cost vectors, updates the booster and trains the learners.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import softmax

from mlrboost.core import TOL, LabelSet, normalize_cost
from mlrboost.losses import (
    LossKind,
    adaptive_weight,
    logistic_gradient,
    logistic_loss,
    pair_margins,
    pair_weight,
    rank_loss,
)
from mlrboost.potentials import PotentialTable
from mlrboost.weak_learners import WeakLearner

ALPHA_BOUND = 2.0


class ProtocolError(RuntimeError):
    """Raised when predict/update calls are out of order."""


class LossTracker:
    """Cumulative and sliding-window mean of per-round losses."""

    def __init__(self, window: int = 100):
        self.window = deque(maxlen=window)
        self.total = 0.0
        self.count = 0

    def add(self, value: float) -> None:
        self.window.append(value)
        self.total += value
        self.count += 1

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def window_mean(self) -> float:
        return sum(self.window) / len(self.window) if self.window else 0.0


@dataclass
class RoundRecord:
    """What the learners were told on the last completed round."""

    Y: LabelSet
    predictions: np.ndarray  # (N, k) weak predictions
    costs: np.ndarray  # (N, k) costs as passed to the learners
    importances: np.ndarray  # (N,)
    weights: np.ndarray  # (N,) cost ranges before normalization
    loss: float


class _Booster:
    def __init__(self, learners: Sequence[WeakLearner], k: int, window: int = 100,
                 normalize_importance: bool = True, validate: bool = True):
        self.learners = list(learners)
        if not self.learners:
            raise ValueError("need at least one weak learner")
        self.k = k
        self.N = len(self.learners)
        self.normalize_importance = normalize_importance
        self.validate = validate
        self.tracker = LossTracker(window)
        self.max_weight = np.zeros(self.N)
        self.last_round: RoundRecord | None = None
        self._pending = None

    def _gather(self, x) -> np.ndarray:
        if self._pending is not None:
            raise ProtocolError("predict called again before the previous round's update")
        H = np.vstack([learner.predict(x) for learner in self.learners])
        if self.validate:
            if H.shape[1] != self.k or np.any(H < -TOL) or np.any(np.abs(H.sum(axis=1) - 1.0) > TOL):
                raise ValueError("every weak prediction must be a distribution over the k labels")
        return H

    def _take_pending(self):
        if self._pending is None:
            raise ProtocolError("update called without a pending prediction")
        pending, self._pending = self._pending, None
        return pending

    def _feed(self, x, Y: LabelSet, H: np.ndarray, costs: np.ndarray, loss: float) -> None:
        passed = np.empty_like(costs)
        importances = np.empty(self.N)
        weights = np.empty(self.N)
        for i, learner in enumerate(self.learners):
            c_hat, w = normalize_cost(costs[i])
            weights[i] = w
            if self.normalize_importance:
                self.max_weight[i] = max(self.max_weight[i], w)
                imp = w / self.max_weight[i] if self.max_weight[i] > 0 else 0.0
                passed[i] = c_hat
            else:
                imp = 1.0 if w > 0 else 0.0
                passed[i] = costs[i]
            importances[i] = imp
            learner.learn(x, Y, passed[i], imp)
        self.last_round = RoundRecord(Y, H, passed, importances, weights, loss)


class OnlineBMR(_Booster):
    """Boost-by-majority for ranking: unit weights, last expert, potential-based costs."""

    def __init__(self, learners, k: int, gamma: float, loss=LossKind.HINGE, **kw):
        super().__init__(learners, k, **kw)
        if not 0 < gamma < 1:
            raise ValueError(f"OnlineBMR needs an edge gamma in (0, 1), got {gamma}")
        self.gamma = gamma
        self.table = PotentialTable(k, gamma, loss)
        self._remaining = self.N - np.arange(1, self.N + 1)

    def predict(self, x) -> np.ndarray:
        H = self._gather(x)
        S = np.vstack([np.zeros(self.k), np.cumsum(H, axis=0)])
        self._pending = (x, H, S)
        return S[-1].copy()

    def update(self, Y: LabelSet) -> float:
        x, H, S = self._take_pending()
        loss = rank_loss(Y, S[-1])
        self.tracker.add(loss)
        costs = self.table.cost_vectors(Y, S[:-1], self._remaining)
        self._feed(x, Y, H, costs, loss)
        return loss


def ogd_step(alpha, slope, t: int):
    """Projected gradient step with rate ``1/sqrt(t)`` onto [-2, 2]."""
    return np.clip(alpha - np.asarray(slope) / math.sqrt(t), -ALPHA_BOUND, ALPHA_BOUND)


@dataclass
class OlmrState:
    alpha: np.ndarray
    log_v: np.ndarray
    t: int = 1
    cum_cost_dot: np.ndarray = field(default=None)
    cum_weight: np.ndarray = field(default=None)

    @classmethod
    def initial(cls, n: int) -> "OlmrState":
        return cls(np.zeros(n), np.zeros(n), 1, np.zeros(n), np.zeros(n))

    @property
    def v(self) -> np.ndarray:
        """Hedge weights; kept in log space because they underflow on long streams."""
        return np.exp(self.log_v)

    @property
    def expert_probs(self) -> np.ndarray:
        return softmax(self.log_v)


def empirical_edge(state: OlmrState, i: int) -> float | None:
    """Measured edge of learner ``i`` (0-based); ``None`` before it has any weight."""
    if state.cum_weight[i] <= 0:
        return None
    return float(-state.cum_cost_dot[i] / state.cum_weight[i])


class AdaOLMR(_Booster):
    """Adaptive booster: OGD-tuned learner weights in [-2, 2], Hedge over experts.

    The cost for learner ``i`` is the logistic-loss gradient at expert
    ``i - 1``. Rounds with a degenerate label set carry no ranking
    information: they leave the weights, the Hedge state and the step counter
    untouched.
    """

    def __init__(self, learners, k: int, seed=None, record_ogd: bool = False, **kw):
        super().__init__(learners, k, **kw)
        self.rng = np.random.default_rng(seed)
        self.state = OlmrState.initial(self.N)
        self.expert_loss_sum = np.zeros(self.N)
        self.rounds = 0
        self.last_expert: int | None = None
        self.ogd_records: list[list[tuple]] | None = [[] for _ in range(self.N)] if record_ogd else None

    def predict(self, x) -> np.ndarray:
        H = self._gather(x)
        S = np.vstack([np.zeros(self.k), np.cumsum(self.state.alpha[:, None] * H, axis=0)])
        expert = int(self.rng.choice(self.N, p=self.state.expert_probs)) + 1
        self.last_expert = expert
        self._pending = (x, H, S, expert)
        return S[expert].copy()

    def update(self, Y: LabelSet) -> float:
        x, H, S, expert = self._take_pending()
        st = self.state
        loss = rank_loss(Y, S[expert])
        self.tracker.add(loss)
        self.rounds += 1
        expert_losses = np.asarray(rank_loss(Y, S[1:]), dtype=float)
        self.expert_loss_sum += expert_losses
        grads = logistic_gradient(Y, S)  # row j is the gradient at expert j
        costs = grads[:-1]
        if not Y.is_degenerate:
            if self.ogd_records is not None:
                for i in range(self.N):
                    self.ogd_records[i].append((Y, S[i].copy(), H[i].copy()))
            slopes = np.einsum("ik,ik->i", grads[1:], H)
            st.alpha = ogd_step(st.alpha, slopes, st.t)
            st.log_v = st.log_v - expert_losses
            st.cum_cost_dot += np.einsum("ik,ik->i", costs, H)
            st.cum_weight += adaptive_weight(costs)
            st.t += 1
        self._feed(x, Y, H, costs, loss)
        return loss

    def empirical_edges(self) -> list[float | None]:
        return [empirical_edge(self.state, i) for i in range(self.N)]

    @property
    def expert_mean_losses(self) -> np.ndarray:
        return self.expert_loss_sum / max(self.rounds, 1)


class RegretAudit(NamedTuple):
    cumulative_loss: float
    best_fixed_loss: float
    regret: float
    best_alpha: float


def ogd_slope(Y: LabelSet, s_prev, h, alpha: float) -> float:
    """Derivative in ``alpha`` of ``logistic_loss(Y, s_prev + alpha h)``."""
    h = np.asarray(h, dtype=float)
    return float(logistic_gradient(Y, np.asarray(s_prev, dtype=float) + alpha * h) @ h)


def ogd_regret_audit(f_sequence: Iterable[tuple], grid_step: float = 1e-3) -> RegretAudit:
    """Replay projected OGD with step ``1/sqrt(t)`` on ``f_t(a) = logistic_loss(Y_t, s_t + a h_t)``.

    The comparator is the best fixed weight on a grid over [-2, 2].
    """
    seq = [(Y, np.asarray(s, dtype=float), np.asarray(h, dtype=float)) for Y, s, h in f_sequence]
    if not seq:
        raise ValueError("empty loss sequence")
    alpha, cumulative = 0.0, 0.0
    for t, (Y, s, h) in enumerate(seq, start=1):
        cumulative += logistic_loss(Y, s + alpha * h)
        alpha = float(ogd_step(alpha, ogd_slope(Y, s, h, alpha), t))
    grid = np.linspace(-ALPHA_BOUND, ALPHA_BOUND, int(round(2 * ALPHA_BOUND / grid_step)) + 1)
    totals = np.zeros_like(grid)
    for Y, s, h in seq:
        if Y.is_degenerate:
            continue
        z, dz = pair_margins(Y, s), pair_margins(Y, h)
        totals += pair_weight(Y) * np.logaddexp(0.0, z[None, :] + grid[:, None] * dz[None, :]).sum(axis=1)
    j = int(np.argmin(totals))
    return RegretAudit(cumulative, float(totals[j]), cumulative - float(totals[j]), float(grid[j]))
