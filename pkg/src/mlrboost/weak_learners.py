"""Online weak learners, simulation-only oracle learners and the weak-learning certifier."""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy.special import expit, softmax

from mlrboost.core import TOL, LabelSet, is_eor_cost, make_baseline


class WeakLearner(abc.ABC):
    """An online learner that outputs a distribution over ``k`` labels.

    ``predict`` commits to a prediction before the round's label and cost are
    known; ``learn`` receives them afterwards together with an importance
    weight in [0, 1].
    """

    k: int

    @abc.abstractmethod
    def predict(self, x) -> np.ndarray: ...

    @abc.abstractmethod
    def learn(self, x, Y: LabelSet, cost: np.ndarray, importance: float) -> None: ...


def training_feed(cost, importance: float, Y: LabelSet | None = None, mode: str = "argmin") -> list[tuple[int, float]]:
    """Turn a cost vector into weighted single-label training examples.

    ``argmin`` feeds the cheapest label (lowest index on ties) with weight
    ``importance * (max c - min c)``. ``relevant`` feeds every relevant label
    ``l`` with weight ``importance * (max c - c[l])``. Weights are clipped to
    [0, 1] and zero-weight entries dropped.
    """
    c = np.asarray(cost, dtype=float)
    hi = c.max()
    if mode == "argmin":
        w = min(1.0, max(0.0, importance * (hi - c.min())))
        return [(int(np.argmin(c)), w)] if w > 0 else []
    if mode == "relevant":
        if Y is None:
            raise ValueError("relevant-label feed needs the label set")
        feed = []
        for l in Y.relevant:
            w = min(1.0, max(0.0, importance * (hi - c[l])))
            if w > 0:
                feed.append((int(l), w))
        return feed
    raise ValueError(f"unknown feed mode {mode!r}")


def _value(x: Mapping[int, float], f: int) -> float:
    return x.get(f, 0.0)


class StumpLearner(WeakLearner):
    """Online decision stump over a random subset of features.

    The first ``warmup`` weighted examples are buffered to place candidate
    thresholds at empirical quantiles; after that, weighted label counts are
    kept for both sides of every (feature, threshold) candidate and the stump
    splits on the candidate with the lowest weighted Gini impurity. Leaves
    predict add-one smoothed label frequencies.
    """

    def __init__(self, k: int, dim: int, pool_size: int = 20, n_thresholds: int = 8,
                 warmup: int = 30, feed: str = "argmin", seed=None):
        if pool_size < 1:
            raise ValueError("pool_size must be at least 1")
        rng = np.random.default_rng(seed)
        self.k = k
        self.pool = np.sort(rng.choice(dim, size=min(pool_size, dim), replace=False)) if dim > 0 else np.zeros(0, int)
        self.n_thresholds = n_thresholds
        self.warmup = warmup
        self.feed = feed
        self.label_counts = np.zeros(k)
        self.thresholds: np.ndarray | None = None
        self.counts = np.zeros((self.pool.size, n_thresholds, 2, k))
        self._buffer: list[tuple[np.ndarray, int, float]] = []
        self.split: tuple[int, int] | None = None

    def _pool_values(self, x) -> np.ndarray:
        return np.array([_value(x, f) for f in self.pool])

    def predict(self, x) -> np.ndarray:
        if self.split is None:
            leaf = self.label_counts
        else:
            f, j = self.split
            side = int(_value(x, self.pool[f]) > self.thresholds[f, j])
            leaf = self.counts[f, j, side]
        return (leaf + 1.0) / (leaf.sum() + self.k)

    def learn(self, x, Y, cost, importance):
        feed = training_feed(cost, importance, Y, self.feed)
        if not feed or self.pool.size == 0:
            for label, w in feed:
                self.label_counts[label] += w
            return
        vals = self._pool_values(x)
        for label, w in feed:
            self.label_counts[label] += w
            if self.thresholds is None:
                self._buffer.append((vals, label, w))
            else:
                self._count(vals, label, w)
        if self.thresholds is None and len(self._buffer) >= self.warmup:
            self._place_thresholds()
        if self.thresholds is not None:
            self._choose_split()

    def _count(self, vals, label, w):
        side = (vals[:, None] > self.thresholds).astype(int)
        f_idx, t_idx = np.indices(side.shape)
        self.counts[f_idx, t_idx, side, label] += w

    def _place_thresholds(self):
        V = np.array([v for v, _, _ in self._buffer])
        q = np.arange(1, self.n_thresholds + 1) / (self.n_thresholds + 1)
        self.thresholds = np.quantile(V, q, axis=0).T  # (pool, n_thresholds)
        for vals, label, w in self._buffer:
            self._count(vals, label, w)
        self._buffer.clear()

    def _choose_split(self):
        n = self.counts.sum(axis=-1)  # (F, T, 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(n[..., None] > 0, self.counts / n[..., None], 0.0)
        impurity = (n * (1.0 - (p * p).sum(axis=-1))).sum(axis=-1)
        f, j = np.unravel_index(int(np.argmin(impurity)), impurity.shape)
        self.split = (int(f), int(j))


class PerLabelLinearLearner(WeakLearner):
    """One-vs-rest online logistic scorers; predicts the softmax of the scores."""

    def __init__(self, k: int, dim: int, learning_rate: float = 0.1, feed: str = "argmin", seed=None):
        if dim < 1:
            raise ValueError("dim must be at least 1")
        self.k = k
        self.dim = dim
        self.learning_rate = learning_rate
        self.feed = feed
        self.W = np.zeros((k, dim))
        self.b = np.zeros(k)
        self.seed = seed  # unused: training is deterministic

    def _sparse(self, x):
        idx = np.fromiter((i for i in x if i < self.dim), dtype=int)
        vals = np.array([x[i] for i in idx], dtype=float)
        return idx, vals

    def scores(self, x) -> np.ndarray:
        idx, vals = self._sparse(x)
        return self.W[:, idx] @ vals + self.b

    def predict(self, x) -> np.ndarray:
        return softmax(self.scores(x))

    def learn(self, x, Y, cost, importance):
        feed = training_feed(cost, importance, Y, self.feed)
        if not feed:
            return
        idx, vals = self._sparse(x)
        for label, w in feed:
            g = expit(self.W[:, idx] @ vals + self.b)
            g[label] -= 1.0
            step = self.learning_rate * w
            self.W[:, idx] -= step * np.outer(g, vals)
            self.b -= step * g


def stump_learner(k: int, dim: int, feature_pool_size: int = 20, rng_seed=None, **kw) -> StumpLearner:
    return StumpLearner(k, dim, pool_size=feature_pool_size, seed=rng_seed, **kw)


def per_label_linear_learner(k: int, dim: int, learning_rate: float = 0.1, rng_seed=None, **kw) -> PerLabelLinearLearner:
    return PerLabelLinearLearner(k, dim, learning_rate=learning_rate, seed=rng_seed, **kw)


# -- simulation-only learners -------------------------------------------------


@dataclass(frozen=True)
class SimulatedInstance:
    """Instance handed out by the simulation harness; carries the label out of band."""

    label: LabelSet
    t: int
    features: Mapping[int, float] = field(default_factory=dict)


class ClairvoyantLearner(WeakLearner):
    """Learner that reads the round's label set, so it only runs on simulated instances."""

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)
        self.k = 0
        self._cdf_cache: dict = {}

    def _label_of(self, x) -> LabelSet:
        if not isinstance(x, SimulatedInstance):
            raise TypeError(f"{type(self).__name__} only runs inside the simulation harness")
        self.k = x.label.k
        return x.label

    def _draw(self, Y: LabelSet, gamma: float) -> np.ndarray:
        key = (Y, gamma)
        cdf = self._cdf_cache.get(key)
        if cdf is None:
            cdf = self._cdf_cache[key] = np.cumsum(make_baseline(Y, gamma))
        j = min(int(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right")), Y.k - 1)
        e = np.zeros(Y.k)
        e[j] = 1.0
        return e

    def learn(self, x, Y, cost, importance):
        pass


class OracleEdgeLearner(ClairvoyantLearner):
    """Predicts a single label drawn from the edge-``gamma`` baseline.

    With ``sample=False`` it returns the baseline distribution itself.
    """

    def __init__(self, gamma: float, seed=None, sample: bool = True):
        super().__init__(seed)
        if not 0 <= gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        self.gamma = gamma
        self.sample = sample

    def predict(self, x):
        Y = self._label_of(x)
        if not self.sample:
            return make_baseline(Y, self.gamma)
        return self._draw(Y, self.gamma)


class AdversarialLearner(ClairvoyantLearner):
    """Uninformative for the first ``t0 = S / (4 gamma)`` rounds, edge ``2 gamma`` afterwards."""

    def __init__(self, gamma: float, S: float, k: int, seed=None, delta: float | None = None):
        super().__init__(seed)
        if not 0 < gamma < 1.0 / (2 * k):
            raise ValueError(f"gamma must lie in (0, 1/(2k)) = (0, {1 / (2 * k):.4g}), got {gamma}")
        if delta is not None:
            need = k * math.log(1.0 / delta) / gamma
            if S < need - TOL:
                raise ValueError(f"S={S} below k ln(1/delta)/gamma = {need:.4g}")
        if S <= 0:
            raise ValueError("S must be positive")
        self.gamma = gamma
        self.S = S
        self.t0 = math.floor(S / (4.0 * gamma) + TOL)
        self.rounds = 0

    @property
    def informative(self) -> bool:
        return self.rounds > self.t0

    def predict(self, x):
        Y = self._label_of(x)
        self.rounds += 1
        return self._draw(Y, 2 * self.gamma if self.rounds > self.t0 else 0.0)


def oracle_edge_learner(gamma: float, rng_seed=None, sample: bool = True) -> OracleEdgeLearner:
    return OracleEdgeLearner(gamma, rng_seed, sample)


def adversarial_learner(gamma: float, S: float, k: int, rng_seed=None, delta=None) -> AdversarialLearner:
    return AdversarialLearner(gamma, S, k, rng_seed, delta)


def uniform_random_label_adversary(k: int, rng_seed=None) -> Iterator[LabelSet]:
    """Endless i.i.d. draws uniform over the ``2^k - 2`` non-degenerate label sets."""
    if k < 2:
        raise ValueError("need k >= 2 for a non-degenerate label set")
    if k > 30:
        raise ValueError("k > 30 is too large for exact subset enumeration")
    rng = np.random.default_rng(rng_seed)
    while True:
        code = int(rng.integers(1, 2**k - 1))
        yield LabelSet(frozenset(j for j in range(k) if code >> j & 1), k)


# -- weak-learning condition ----------------------------------------------------


@dataclass(frozen=True)
class WlcReport:
    lhs: float
    rhs: float
    satisfied: bool
    satisfied_all_prefixes: bool
    trials: int


@dataclass
class WlcLedger:
    """Running sums for the online weak-learning inequality at ``(delta, gamma, S)``.

    ``min_margin`` tracks ``rhs - lhs`` over every prefix, starting from the
    empty stream where it equals ``S``.
    """

    gamma: float
    S: float
    delta: float = 0.05
    lhs: float = 0.0
    baseline: float = 0.0
    trials: int = 0
    min_margin: float = field(default=math.inf)

    def __post_init__(self):
        self.min_margin = min(self.min_margin, self.S)

    def record(self, w: float, c, yhat, Y: LabelSet) -> None:
        if not -TOL <= w <= 1 + TOL:
            raise ValueError(f"importance weight {w} outside [0, 1]")
        c = np.asarray(c, dtype=float)
        if w == 0:
            # contributes nothing; flat cost vectors only occur with zero weight
            self.trials += 1
            self.min_margin = min(self.min_margin, self.baseline + self.S - self.lhs)
            return
        if not is_eor_cost(c, Y):
            raise ValueError("cost vector is not in the edge-over-random set")
        self.lhs += w * float(c @ np.asarray(yhat, dtype=float))
        self.baseline += w * float(c @ make_baseline(Y, self.gamma))
        self.trials += 1
        self.min_margin = min(self.min_margin, self.baseline + self.S - self.lhs)

    def report(self) -> WlcReport:
        rhs = self.baseline + self.S
        lhs = float(self.lhs)
        return WlcReport(lhs, float(rhs), bool(lhs <= rhs), bool(self.min_margin >= 0), self.trials)


def wlc_certify(ledger: WlcLedger, stream: Iterable[tuple]) -> WlcReport:
    """Fold ``(w, c, yhat, Y)`` rounds into ``ledger`` and report the inequality."""
    for w, c, yhat, Y in stream:
        ledger.record(w, c, yhat, Y)
    return ledger.report()
