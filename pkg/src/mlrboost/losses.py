"""Pairwise ranking losses over relevant/irrelevant label pairs.

Every function accepts a single score vector of shape ``(k,)`` or a stack of
them with shape ``(..., k)``; the latter returns one value per leading index.
Degenerate label sets (empty or full) have no pairs and all losses are 0.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.special import expit

from mlrboost.core import TOL, LabelSet


class LossKind(enum.Enum):
    RANK = "rank"
    HINGE = "hinge"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown loss {value!r}; choose from rank, hinge, logistic") from None


def pair_weight(Y: LabelSet) -> float:
    """``1 / (|Y| |Y^c|)``, or 0 for a degenerate label set."""
    if Y.is_degenerate:
        return 0.0
    return 1.0 / (Y.size * (Y.k - Y.size))


def pair_margins(Y: LabelSet, s) -> np.ndarray:
    """``s[r] - s[l]`` for every relevant ``l`` and irrelevant ``r``; positive means misordered."""
    s = np.asarray(s, dtype=float)
    l, r = Y.pairs
    return s[..., r] - s[..., l]


def rank_kernel(z):
    z = np.asarray(z, dtype=float)
    out = (z > TOL).astype(float)
    out[np.abs(z) <= TOL] = 0.5
    return out


def hinge_kernel(z):
    return np.maximum(1.0 + np.asarray(z, dtype=float), 0.0)


def logistic_kernel(z):
    # logaddexp(0, z) evaluates z + log1p(exp(-z)) for large z, so no overflow.
    return np.logaddexp(0.0, np.asarray(z, dtype=float))


KERNELS = {
    LossKind.RANK: rank_kernel,
    LossKind.HINGE: hinge_kernel,
    LossKind.LOGISTIC: logistic_kernel,
}


def _pairwise_loss(Y: LabelSet, s, kernel):
    s = np.asarray(s, dtype=float)
    if Y.is_degenerate:
        out = np.zeros(s.shape[:-1])
        return float(out) if out.ndim == 0 else out
    out = pair_weight(Y) * kernel(pair_margins(Y, s)).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def rank_loss(Y: LabelSet, s):
    """Fraction of misordered pairs, ties counted one half."""
    return _pairwise_loss(Y, s, rank_kernel)


def hinge_loss(Y: LabelSet, s):
    return _pairwise_loss(Y, s, hinge_kernel)


def logistic_loss(Y: LabelSet, s):
    return _pairwise_loss(Y, s, logistic_kernel)


def loss(kind: LossKind, Y: LabelSet, s):
    return _pairwise_loss(Y, s, KERNELS[LossKind.parse(kind)])


def logistic_gradient(Y: LabelSet, s) -> np.ndarray:
    """Gradient of :func:`logistic_loss` with respect to the scores.

    Irrelevant entries are ``w_Y * sum_l sigmoid(s[r] - s[l])`` and relevant
    entries the negated row sums, so the vector sums to zero.
    """
    s = np.asarray(s, dtype=float)
    if Y.is_degenerate:
        return np.zeros_like(s)
    sig = pair_weight(Y) * expit(pair_margins(Y, s))
    L, R = Y.incidence
    return sig @ R - sig @ L


def adaptive_weight(c, Y: LabelSet | None = None):
    """Half the l1 norm of a logistic gradient cost vector."""
    c = np.asarray(c, dtype=float)
    out = 0.5 * np.abs(c).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out
