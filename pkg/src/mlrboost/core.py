"""Domain types, the edge-over-random baseline and the cost-vector feasible set.

Labels are 1-based at every I/O boundary and 0-based inside the package.
Score, cost and weak-prediction vectors are plain ``numpy`` float arrays of
length ``k``; the helpers below validate them where a contract demands it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

TOL = 1e-9


@dataclass(frozen=True)
class LabelSet:
    """Relevant subset of ``{0, ..., k-1}`` for one round."""

    members: frozenset[int]
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"label count must be positive, got {self.k}")
        members = frozenset(int(m) for m in self.members)
        bad = [m for m in members if not 0 <= m < self.k]
        if bad:
            raise ValueError(f"labels {sorted(bad)} outside [0, {self.k})")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_labels(cls, labels: Iterable[int], k: int) -> "LabelSet":
        """Build from 1-based labels, rejecting duplicates."""
        labels = [int(x) for x in labels]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        bad = [x for x in labels if not 1 <= x <= k]
        if bad:
            raise ValueError(f"labels {bad} outside [1, {k}]")
        return cls(frozenset(x - 1 for x in labels), k)

    def one_based(self) -> list[int]:
        return [m + 1 for m in sorted(self.members)]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def is_degenerate(self) -> bool:
        return self.size == 0 or self.size == self.k

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.k, dtype=bool)
        m[list(self.members)] = True
        return m

    @cached_property
    def relevant(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @cached_property
    def irrelevant(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Index arrays ``(l, r)`` over all relevant/irrelevant pairs."""
        l, r = np.meshgrid(self.relevant, self.irrelevant, indexing="ij")
        return l.ravel(), r.ravel()

    @cached_property
    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """One-hot matrices ``(L, R)`` of shape (pairs, k) for scatter-adds."""
        l, r = self.pairs
        eye = np.eye(self.k)
        return eye[l], eye[r]

    def __contains__(self, label: int) -> bool:
        return label in self.members

    def __repr__(self):
        return f"LabelSet({self.one_based()}, k={self.k})"


@dataclass(frozen=True)
class Example:
    """One labeled instance; feature indices are 0-based."""

    features: Mapping[int, float]
    label: LabelSet

    def __post_init__(self):
        for idx, val in self.features.items():
            if idx < 0:
                raise ValueError(f"negative feature index {idx}")
            if not np.isfinite(val):
                raise ValueError(f"non-finite value at feature {idx}")


@dataclass(frozen=True)
class BaselineParams:
    gamma: float
    k: int


def check_distribution(p, k: int | None = None) -> np.ndarray:
    """Validate a weak prediction and return it as a float array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (k is not None and p.shape[0] != k):
        raise ValueError(f"expected a length-{k} vector, got shape {p.shape}")
    if np.any(p < -TOL) or abs(p.sum() - 1.0) > TOL:
        raise ValueError("weak prediction must be a distribution over the labels")
    return p


def make_baseline(Y: LabelSet, gamma: float) -> np.ndarray:
    """Edge-over-random distribution: ``a + gamma`` on relevant labels, ``a`` elsewhere.

    ``a = (1 - |Y| gamma) / k`` is forced by normalization. A degenerate label
    set (empty or full) has no pair to favor and gets the uniform distribution.
    """
    if isinstance(gamma, BaselineParams):
        gamma = gamma.gamma
    if gamma != 0 and not 0 < gamma < 1:
        raise ValueError(f"gamma must be 0 or lie in (0, 1), got {gamma}")
    k = Y.k
    if Y.is_degenerate:
        return np.full(k, 1.0 / k)
    a = (1.0 - Y.size * gamma) / k
    if a < -TOL:
        raise ValueError(f"gamma={gamma} too large for |Y|={Y.size} (needs gamma <= 1/|Y|)")
    u = np.full(k, max(a, 0.0))
    u[Y.relevant] += gamma
    return u


def encode_single_label(label: int, k: int) -> np.ndarray:
    """Basis vector for a 1-based label."""
    if not 1 <= label <= k:
        raise ValueError(f"label {label} outside [1, {k}]")
    e = np.zeros(k)
    e[label - 1] = 1.0
    return e


def encode_label_subset(S: LabelSet) -> np.ndarray:
    if S.size == 0:
        raise ValueError("cannot encode an empty label subset")
    return S.mask / S.size


def is_eor_cost(c, Y: LabelSet) -> bool:
    """Membership test for the edge-over-random cost set."""
    c = np.asarray(c, dtype=float)
    if c.shape != (Y.k,) or not np.all(np.isfinite(c)):
        return False
    if np.any(c < -TOL) or np.any(c > 1 + TOL):
        return False
    if abs(c.min()) > TOL or abs(c.max() - 1.0) > TOL:
        return False
    if Y.is_degenerate:
        return True
    return bool(c[Y.relevant].max() <= c[Y.irrelevant].min() + TOL)


def normalize_cost(c, Y: LabelSet | None = None) -> tuple[np.ndarray, float]:
    """Affinely map ``c`` onto [0, 1]; returns the normalized vector and its range.

    ``Y`` is accepted for symmetry with :func:`is_eor_cost`; the map does not
    depend on it.
    """
    c = np.asarray(c, dtype=float)
    lo, hi = c.min(), c.max()
    weight = float(hi - lo)
    if weight <= 0:
        return np.zeros_like(c), 0.0
    return (c - lo) / weight, weight
