"""Reference policies: centralized parsimonious KL-UCB, oracle, random hopping."""

from __future__ import annotations

import random
from typing import Sequence

import numpy as np
from numba import njit

from .env import ArmMeans, Feedback
from .index import DEFAULT_TOLERANCE, MAX_ITER, _bisect_index, exploration_rate


@njit(cache=True)
def _pick(pulls, sums, M, f_value, tol, max_iter):
    K = pulls.shape[0]
    means = np.zeros(K)
    for k in range(K):
        if pulls[k] > 0:
            means[k] = sums[k] / pulls[k]
    taken = np.zeros(K, dtype=np.bool_)
    plays = np.empty(M, dtype=np.int64)
    for j in range(M - 1):
        best = -1
        for k in range(K):
            if not taken[k] and (best < 0 or means[k] > means[best]):
                best = k
        taken[best] = True
        plays[j] = best + 1
    best = -1
    best_index = -1.0
    for k in range(K):
        if not taken[k]:
            b = _bisect_index(means[k], pulls[k], f_value, tol, max_iter)
            if b > best_index:
                best, best_index = k, b
    plays[M - 1] = best + 1
    return plays


class CentralizedController:
    """One controller choosing M distinct arms per round.

    Plays the M-1 arms with the largest empirical means and adds the arm of
    largest KL-UCB index among the remaining ones. Statistics are updated
    every round. Ties go to the lowest arm index.
    """

    def __init__(self, K: int, M: int, tolerance: float = DEFAULT_TOLERANCE):
        if not 1 <= M < K:
            raise ValueError(f"need 1 <= M < K, got M={M}, K={K}")
        self.K = K
        self.M = M
        self.tolerance = tolerance
        self.pulls = np.zeros(K, dtype=np.int64)
        self.sums = np.zeros(K, dtype=np.int64)
        self.round_clock = 0
        self._plays: list[int] = []

    def means(self) -> np.ndarray:
        return np.divide(self.sums, self.pulls, out=np.zeros(self.K), where=self.pulls > 0)

    def select(self, t: int) -> list[int]:
        self._plays = _pick(
            self.pulls, self.sums, self.M, exploration_rate(t), self.tolerance, MAX_ITER
        ).tolist()
        return list(self._plays)

    def update(self, plays: Sequence[int], rewards: Sequence[int]) -> None:
        if len(plays) != len(rewards):
            raise ValueError(f"{len(plays)} plays but {len(rewards)} rewards")
        if len(set(plays)) != len(plays):
            raise ValueError("centralized plays must be distinct")
        idx = np.asarray(plays) - 1
        self.pulls[idx] += 1
        self.sums[idx] += np.asarray(rewards, dtype=np.int64)
        self.round_clock += 1

    def observe(self, t: int, feedback: Sequence[Feedback]) -> None:
        self.update(self._plays, [fb.reward for fb in feedback])


def centralized_select(state: CentralizedController, t: int) -> list[int]:
    return state.select(t)


def centralized_update(
    state: CentralizedController, plays: Sequence[int], rewards: Sequence[int]
) -> CentralizedController:
    state.update(plays, rewards)
    return state


def oracle_select(means: ArmMeans | Sequence[float], M: int) -> list[int]:
    """The true top-M arms, best first."""
    if not isinstance(means, ArmMeans):
        means = ArmMeans(means)
    return means.top(M)


class OracleTeam:
    def __init__(self, means: ArmMeans, M: int):
        self.plays = oracle_select(means, M)

    def select(self, t: int) -> list[int]:
        return list(self.plays)

    def observe(self, t: int, feedback: Sequence[Feedback]) -> None:
        pass


class RandomHopTeam:
    """Control policy: every player picks a uniform arm each round, independently."""

    def __init__(self, K: int, rngs: Sequence[random.Random]):
        self.K = K
        self.rngs = list(rngs)

    def select(self, t: int) -> list[int]:
        K = self.K
        return [rng.randrange(1, K + 1) for rng in self.rngs]

    def observe(self, t: int, feedback: Sequence[Feedback]) -> None:
        pass
