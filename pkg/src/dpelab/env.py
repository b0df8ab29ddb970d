"""Bernoulli arms with collision-sensing feedback.

Arms are numbered 1..K everywhere in the public API.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Draws are generated this many rounds at a time; fixed so that replays are exact.
_CHUNK = 1024


def mix64(seed: int, stream: int) -> int:
    """Derive an independent 64-bit seed for ``stream`` from a run seed.

    SplitMix64 finalizer applied to ``seed + (stream + 1) * golden``. Stream 0
    is the environment, stream i >= 1 is player i.
    """
    z = (seed + (stream + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class ArmMeans:
    means: tuple[float, ...]

    def __init__(self, means: Sequence[float]):
        means = tuple(float(m) for m in means)
        if len(means) < 2:
            raise ValueError("need at least two arms")
        for m in means:
            if not 0.0 < m < 1.0:
                raise ValueError(f"arm mean {m} not in the open interval (0, 1)")
        if len(set(means)) != len(means):
            raise ValueError("arm means must be pairwise distinct")
        object.__setattr__(self, "means", means)

    @property
    def K(self) -> int:
        return len(self.means)

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, arm: int) -> float:
        """Mean of ``arm`` (1-based)."""
        return self.means[arm - 1]

    def top(self, M: int) -> list[int]:
        """The M best arms, best first."""
        order = sorted(range(1, self.K + 1), key=lambda k: -self.means[k - 1])
        return order[:M]


class Feedback(NamedTuple):
    collision: bool
    reward: int | None


COLLIDED = Feedback(True, None)
_CLEAN = (Feedback(False, 0), Feedback(False, 1))


class RoundLog(NamedTuple):
    round: int
    selections: tuple[int, ...]
    draws: tuple[int, ...]
    collided_arms: frozenset[int]


def collided_arms(selections: Sequence[int]) -> frozenset[int]:
    if len(set(selections)) == len(selections):
        return frozenset()
    seen: set[int] = set()
    dup: set[int] = set()
    for a in selections:
        if a in seen:
            dup.add(a)
        seen.add(a)
    return frozenset(dup)


class Environment:
    """K Bernoulli arms shared by ``num_players`` players.

    Every round draws one X_k(t) per arm, whatever the selections are, so runs
    with the same seed see the same rewards.
    """

    def __init__(self, means: ArmMeans, num_players: int, seed: int):
        if not isinstance(means, ArmMeans):
            means = ArmMeans(means)
        if not 1 <= num_players < means.K:
            raise ValueError(f"num_players={num_players} must satisfy 1 <= M < K={means.K}")
        self.means = means
        self.K = means.K
        self.num_players = num_players
        self.seed = seed
        self.t = 0
        self._rng = np.random.Generator(np.random.PCG64(mix64(seed, 0)))
        self._p = np.asarray(means.means)
        self._buf: list[tuple[int, ...]] = []
        self._pos = 0

    def _draws(self) -> tuple[int, ...]:
        if self._pos == len(self._buf):
            block = (self._rng.random((_CHUNK, self.K)) < self._p).astype(np.int8)
            self._buf = [tuple(row) for row in block.tolist()]
            self._pos = 0
        row = self._buf[self._pos]
        self._pos += 1
        return row

    def step(self, selections: Sequence[int]) -> tuple[list[Feedback], RoundLog]:
        if len(selections) != self.num_players:
            raise ValueError(f"expected {self.num_players} selections, got {len(selections)}")
        K = self.K
        for a in selections:
            if not 1 <= a <= K:
                raise ValueError(f"arm index {a} out of range 1..{K}")
        self.t += 1
        draws = self._draws()
        hit = collided_arms(selections)
        if hit:
            feedback = [COLLIDED if a in hit else _CLEAN[draws[a - 1]] for a in selections]
        else:
            feedback = [_CLEAN[draws[a - 1]] for a in selections]
        return feedback, RoundLog(self.t, tuple(selections), draws, hit)


def new_env(means: ArmMeans | Sequence[float], num_players: int, seed: int) -> Environment:
    return Environment(means if isinstance(means, ArmMeans) else ArmMeans(means), num_players, seed)


def optimal_round_reward(means: ArmMeans | Sequence[float], M: int) -> float:
    """Sum of the M largest means."""
    values = means.means if isinstance(means, ArmMeans) else tuple(means)
    if not 1 <= M < len(values):
        raise ValueError(f"M={M} must satisfy 1 <= M < K={len(values)}")
    return sum(sorted(values, reverse=True)[:M])
