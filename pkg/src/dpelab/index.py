"""Bernoulli KL divergence, exploration rate and the KL-UCB index."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

DEFAULT_TOLERANCE = 1e-9
MAX_ITER = 100


@dataclass
class ArmStatistics:
    pulls: int = 0
    reward_sum: int = 0

    @property
    def mean_estimate(self) -> float:
        # N_k = 0 gives mu_hat_k = 0 by convention
        return self.reward_sum / self.pulls if self.pulls else 0.0

    def record(self, reward: int) -> None:
        self.pulls += 1
        self.reward_sum += reward


@njit(cache=True)
def _kl(p, q):
    # caller guarantees 0 <= p <= 1 and 0 < q < 1
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


@njit(cache=True)
def _bisect_index(mean, pulls, f_value, tol, max_iter):
    if pulls == 0 or mean >= 1.0:
        return 1.0
    lo = mean
    # kl(p, q) >= 2 (q - p)^2 puts the supremum below p + sqrt(f / 2N)
    hi = min(1.0, mean + math.sqrt(f_value / (2.0 * pulls)))
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        if pulls * _kl(mean, mid) <= f_value:
            lo = mid
        else:
            hi = mid
        it += 1
    return lo


@njit(cache=True)
def _bisect_indices(means, pulls, f_value, tol, max_iter):
    out = np.empty(means.shape[0])
    for k in range(means.shape[0]):
        out[k] = _bisect_index(means[k], pulls[k], f_value, tol, max_iter)
    return out


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q).

    Uses 0 ln 0 = 0 and returns ``math.inf`` when q is 0 or 1 and p != q.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"kl_bernoulli domain is [0,1]^2, got ({p}, {q})")
    if p == q:
        return 0.0
    if q == 0.0 or q == 1.0:
        return math.inf
    return max(0.0, _kl(p, q))


def exploration_rate(t: int) -> float:
    """f(t) = ln t + 4 ln ln t, clamped to 0 (and 0 for t <= e)."""
    if t <= math.e:
        return 0.0
    lt = math.log(t)
    return max(0.0, lt + 4.0 * math.log(lt))


def klucb_index(
    stats: ArmStatistics, f_value: float, tolerance: float = DEFAULT_TOLERANCE
) -> float:
    """Largest q >= mean with ``pulls * kl(mean, q) <= f_value``, by bisection.

    The returned value is always feasible and within ``tolerance`` of the
    supremum.
    """
    return float(
        _bisect_index(stats.mean_estimate, stats.pulls, float(f_value), tolerance, MAX_ITER)
    )


def klucb_indices(
    means: np.ndarray, pulls: np.ndarray, f_value: float, tolerance: float = DEFAULT_TOLERANCE
) -> np.ndarray:
    """Vectorised :func:`klucb_index` over arrays of means and pull counts."""
    return _bisect_indices(
        np.asarray(means, dtype=np.float64),
        np.asarray(pulls, dtype=np.int64),
        float(f_value),
        tolerance,
        MAX_ITER,
    )
