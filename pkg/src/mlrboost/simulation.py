"""Round loops shared by the CLI and the test-suite.

``run_rounds`` drives any booster over ``(x, Y)`` pairs. The synthetic helpers
pair the uniform random label adversary with clairvoyant learners; those
learners never appear on the real-data path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from mlrboost.boosters import AdaOLMR, OnlineBMR
from mlrboost.core import Example, LabelSet
from mlrboost.losses import LossKind
from mlrboost.weak_learners import (
    AdversarialLearner,
    OracleEdgeLearner,
    SimulatedInstance,
    WlcLedger,
    WlcReport,
    uniform_random_label_adversary,
)

ALGOS = ("bmr", "olmr")


def run_rounds(booster, rounds: Iterable[tuple[object, LabelSet]]) -> Iterator[tuple[int, LabelSet, float]]:
    """Progressive validation: predict on each instance, then reveal its label."""
    for t, (x, Y) in enumerate(rounds, start=1):
        booster.predict(x)
        yield t, Y, booster.update(Y)


def example_rounds(examples: Iterable[Example]):
    for ex in examples:
        yield ex.features, ex.label


def adversary_rounds(k: int, T: int, seed) -> Iterator[tuple[SimulatedInstance, LabelSet]]:
    labels = uniform_random_label_adversary(k, seed)
    for t in range(1, T + 1):
        Y = next(labels)
        yield SimulatedInstance(Y, t), Y


def make_booster(algo: str, learners, k: int, *, gamma=None, loss=LossKind.RANK, seed=None, window: int = 100, **kw):
    if algo == "bmr":
        if gamma is None:
            raise ValueError("bmr needs gamma")
        return OnlineBMR(learners, k, gamma, loss=loss, window=window, **kw)
    if algo == "olmr":
        return AdaOLMR(learners, k, seed=seed, window=window, **kw)
    raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGOS}")


def synthetic_learners(kind: str, N: int, k: int, gamma: float, seeds, S: float | None = None, delta: float | None = None,
                       sample: bool = True):
    if kind == "oracle":
        return [OracleEdgeLearner(gamma, seed=s, sample=sample) for s in seeds]
    if kind == "adversarial":
        if S is None:
            S = k * math.log(1.0 / delta) / gamma
        return [AdversarialLearner(gamma, S, k, seed=s, delta=delta) for s in seeds]
    raise ValueError(f"unknown synthetic learner {kind!r}; choose oracle or adversarial")


@dataclass
class SimulationResult:
    booster: object
    losses: np.ndarray

    @property
    def mean_loss(self) -> float:
        return float(self.losses.mean()) if self.losses.size else 0.0


def simulate(algo: str, k: int, gamma: float, N: int, T: int, *, learner: str = "oracle", seed: int = 0,
             loss=LossKind.RANK, S: float | None = None, delta: float = 0.05, sample: bool = True,
             on_round: Callable | None = None, **booster_kw) -> SimulationResult:
    """Run a booster against the uniform random label adversary with clairvoyant learners.

    For ``algo="olmr"``, ``gamma`` only sets the learners' edge.
    """
    ss = np.random.SeedSequence(seed)
    adv_seed, boost_seed, learner_ss = ss.spawn(3)
    learners = synthetic_learners(learner, N, k, gamma, learner_ss.spawn(N), S=S, delta=delta, sample=sample)
    booster = make_booster(algo, learners, k, gamma=gamma if algo == "bmr" else None, loss=loss,
                           seed=boost_seed, **booster_kw)
    losses = np.empty(T)
    for t, Y, value in run_rounds(booster, adversary_rounds(k, T, adv_seed)):
        losses[t - 1] = value
        if on_round is not None:
            on_round(t, Y, value, booster)
    return SimulationResult(booster, losses)


def certify_run(learner: str, k: int, gamma: float, delta: float, S: float, T: int, *, N: int = 1,
                edge: float | None = None, seed: int = 0) -> list[WlcReport]:
    """Certify each learner of an OnlineBMR ensemble against the label adversary.

    Costs and importance weights are the ones OnlineBMR (rank potentials at
    edge ``gamma``) hands to the learners. ``edge`` is the oracle learners'
    true edge; the adversarial learner derives its phases from ``gamma``.
    """
    ss = np.random.SeedSequence(seed)
    adv_seed, learner_ss = ss.spawn(2)
    if learner == "oracle":
        learners = [OracleEdgeLearner(gamma if edge is None else edge, seed=s) for s in learner_ss.spawn(N)]
    else:
        learners = synthetic_learners(learner, N, k, gamma, learner_ss.spawn(N), S=S, delta=delta)
    booster = OnlineBMR(learners, k, gamma, loss=LossKind.RANK)
    ledgers = [WlcLedger(gamma, S, delta) for _ in range(N)]
    for _ in run_rounds(booster, adversary_rounds(k, T, adv_seed)):
        rec = booster.last_round
        for i, ledger in enumerate(ledgers):
            ledger.record(rec.importances[i], rec.costs[i], rec.predictions[i], rec.Y)
    return [ledger.report() for ledger in ledgers]
