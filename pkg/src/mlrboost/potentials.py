"""Exact potentials for rank and hinge losses.

A potential is the expected loss of a score state after ``i`` more i.i.d. draws
from the edge-over-random baseline. Both supported losses decompose over
(relevant, irrelevant) pairs, and for a fixed pair only the difference
``D = X_r - X_l`` of the two draw counts matters. ``D`` is a lazy random walk
with steps +1 (irrelevant label drawn), -1 (relevant label drawn) and 0, so its
law follows from an O(i^2) dynamic program and the potential becomes a finite
sum over pairs and walk positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mlrboost.core import LabelSet, make_baseline
from mlrboost.losses import KERNELS, LossKind, loss, pair_margins, pair_weight

# Upper bound on floats materialized per batched kernel evaluation.
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class PairStepProbs:
    p_plus: float
    p_minus: float

    @property
    def p_zero(self) -> float:
        return max(0.0, 1.0 - self.p_plus - self.p_minus)


@dataclass(frozen=True, eq=False)
class DiffDistribution:
    """Law of the pair difference after ``horizon`` draws; ``pmf[j]`` is P(D = j - horizon)."""

    horizon: int
    pmf: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.arange(-self.horizon, self.horizon + 1)

    def prob(self, d: int) -> float:
        if abs(d) > self.horizon:
            return 0.0
        return float(self.pmf[d + self.horizon])


def pair_step_probs(size_y: int, gamma: float, k: int) -> PairStepProbs:
    if not 0 < size_y < k:
        raise ValueError(f"pair steps need 0 < |Y| < k, got |Y|={size_y}, k={k}")
    a = (1.0 - size_y * gamma) / k
    if a < -1e-12:
        raise ValueError(f"gamma={gamma} too large for |Y|={size_y}")
    a = max(a, 0.0)
    return PairStepProbs(p_plus=a, p_minus=a + gamma)


def _step(pmf: np.ndarray, p: PairStepProbs) -> np.ndarray:
    out = np.zeros(pmf.size + 2)
    out[1:-1] += p.p_zero * pmf
    out[2:] += p.p_plus * pmf
    out[:-2] += p.p_minus * pmf
    return out


def diff_distribution(i: int, p: PairStepProbs) -> DiffDistribution:
    if i < 0:
        raise ValueError("horizon must be non-negative")
    pmf = np.ones(1)
    for _ in range(i):
        pmf = _step(pmf, p)
    return DiffDistribution(i, pmf)


def _expected_kernel(z: np.ndarray, pmf: np.ndarray, kernel) -> np.ndarray:
    """``sum_d pmf[d] g(z + d)`` elementwise over ``z``; ``pmf`` is centered."""
    h = (pmf.size - 1) // 2
    d = np.arange(-h, h + 1)
    return kernel(z[..., None] + d) @ pmf


def _check_loss(kind) -> LossKind:
    kind = LossKind.parse(kind)
    if kind not in (LossKind.RANK, LossKind.HINGE):
        raise ValueError(f"potentials are only defined for rank and hinge losses, not {kind.value}")
    return kind


def potential(Y: LabelSet, s, i: int, gamma: float, kind=LossKind.RANK) -> float:
    """Expected loss of ``s + X`` where ``X`` counts ``i`` baseline draws."""
    kind = _check_loss(kind)
    if i == 0:
        return loss(kind, Y, s)
    if Y.is_degenerate:
        return 0.0
    dist = diff_distribution(i, pair_step_probs(Y.size, gamma, Y.k))
    z = pair_margins(Y, s)
    return pair_weight(Y) * float(_expected_kernel(z, dist.pmf, KERNELS[kind]).sum())


class PotentialTable:
    """Potentials at fixed ``(k, gamma, loss)`` with cached walk distributions.

    Distributions depend on the label set only through ``|Y|``, so they are
    cached per ``(horizon, |Y|)`` and shared across rounds.
    """

    def __init__(self, k: int, gamma: float, kind=LossKind.HINGE):
        self.k = k
        self.gamma = float(gamma)
        self.kind = _check_loss(kind)
        self.kernel = KERNELS[self.kind]
        self._dists: dict[tuple[int, int], DiffDistribution] = {}
        self._padded: dict[tuple[int, int], np.ndarray] = {}

    def distribution(self, horizon: int, size_y: int) -> DiffDistribution:
        key = (horizon, size_y)
        if key not in self._dists:
            p = pair_step_probs(size_y, self.gamma, self.k)
            # extend from the longest cached horizon below this one
            start = max((h for (h, m) in self._dists if m == size_y and h < horizon), default=None)
            if start is None:
                pmf, h0 = np.ones(1), 0
            else:
                pmf, h0 = self._dists[(start, size_y)].pmf, start
            for h in range(h0 + 1, horizon + 1):
                pmf = _step(pmf, p)
                self._dists.setdefault((h, size_y), DiffDistribution(h, pmf))
            self._dists.setdefault(key, DiffDistribution(horizon, pmf))
        return self._dists[key]

    def padded_pmfs(self, max_horizon: int, size_y: int) -> np.ndarray:
        """Rows ``h = 0..max_horizon`` of centered pmfs, zero-padded to width ``2 max_horizon + 1``."""
        key = (max_horizon, size_y)
        if key not in self._padded:
            out = np.zeros((max_horizon + 1, 2 * max_horizon + 1))
            for h in range(max_horizon + 1):
                out[h, max_horizon - h : max_horizon + h + 1] = self.distribution(h, size_y).pmf
            out.setflags(write=False)
            self._padded[key] = out
        return self._padded[key]

    def potential(self, Y: LabelSet, s, horizon: int) -> float:
        if horizon == 0:
            return loss(self.kind, Y, s)
        if Y.is_degenerate:
            return 0.0
        pmf = self.distribution(horizon, Y.size).pmf
        z = pair_margins(Y, s)
        return pair_weight(Y) * float(_expected_kernel(z, pmf, self.kernel).sum())

    def cost_vector(self, Y: LabelSet, s_prev, remaining: int) -> np.ndarray:
        """``c[j] = potential(s_prev + e_j, remaining)`` for every label ``j``."""
        s_prev = np.asarray(s_prev, dtype=float)
        return self.cost_vectors(Y, s_prev[None, :], np.array([remaining]))[0]

    def cost_vectors(self, Y: LabelSet, s_prev, remaining) -> np.ndarray:
        """Batched :meth:`cost_vector` over rows of ``s_prev`` with per-row horizons.

        Adding ``e_j`` moves the margin of every pair touching ``j`` by +1 (``j``
        irrelevant) or -1 (``j`` relevant), so three shifted kernel expectations
        per pair give all ``k`` entries at once.
        """
        s_prev = np.atleast_2d(np.asarray(s_prev, dtype=float))
        remaining = np.asarray(remaining, dtype=int)
        n = s_prev.shape[0]
        if Y.is_degenerate:
            return np.zeros((n, self.k))
        H = int(remaining.max())
        M = self.padded_pmfs(H, Y.size)[remaining]  # (n, 2H+1)
        z = pair_margins(Y, s_prev)  # (n, P)
        P = z.shape[1]
        d = np.arange(-H, H + 1)
        shifts = np.array([-1.0, 0.0, 1.0])
        E = np.empty((n, P, 3))
        rows = max(1, _CHUNK_ELEMS // max(1, P * 3 * d.size))
        for lo in range(0, n, rows):
            hi = min(n, lo + rows)
            G = self.kernel(z[lo:hi, :, None, None] + shifts[:, None] + d)
            E[lo:hi] = np.einsum("npsd,nd->nps", G, M[lo:hi])
        E_minus, E0, E_plus = E[..., 0], E[..., 1], E[..., 2]
        L, R = Y.incidence
        c = E0.sum(axis=1)[:, None] + (E_plus - E0) @ R + (E_minus - E0) @ L
        return pair_weight(Y) * c


def bmr_cost_vector(Y: LabelSet, s_prev, remaining: int, gamma: float, kind=LossKind.HINGE) -> np.ndarray:
    return PotentialTable(Y.k, gamma, kind).cost_vector(Y, s_prev, remaining)


def zero_state_bound(kind, gamma: float, horizon: int) -> float:
    """Upper bound on the potential of the zero state: ``exp(-gamma^2 N / 2)``, times ``N + 1`` for hinge."""
    kind = _check_loss(kind)
    b = math.exp(-gamma * gamma * horizon / 2.0)
    return b if kind is LossKind.RANK else (horizon + 1) * b


def mc_potential(Y: LabelSet, s, i: int, gamma: float, kind=LossKind.RANK,
                 n_samples: int = 100_000, seed=None) -> tuple[float, float]:
    """Monte-Carlo estimate of :func:`potential` and its standard error."""
    kind = _check_loss(kind)
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    s = np.asarray(s, dtype=float)
    if i == 0:
        return loss(kind, Y, s), 0.0
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(i, make_baseline(Y, gamma), size=n_samples)
    vals = np.atleast_1d(loss(kind, Y, s + counts))
    se = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return float(vals.mean()), se
