"""Measurements that need the true arm means: regret, the lower-bound constant,
per-round tallies of the leader's bad rounds, and numeric checks of the two
concentration results used by the regret proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .env import ArmMeans, RoundLog
from .index import kl_bernoulli


def lower_bound_constant(means: ArmMeans | Sequence[float], M: int) -> float:
    """C(mu) = sum over k > M of (mu_M - mu_k) / kl(mu_k, mu_M)."""
    values = sorted(means.means if isinstance(means, ArmMeans) else means, reverse=True)
    if not 1 <= M < len(values):
        raise ValueError(f"M={M} must satisfy 1 <= M < K={len(values)}")
    mu_M = values[M - 1]
    return sum((mu_M - mu) / kl_bernoulli(mu, mu_M) for mu in values[M:])


@dataclass(frozen=True)
class InstanceTruth:
    means: ArmMeans
    M: int
    delta: float = 0.0

    def __post_init__(self):
        if not 1 <= self.M < self.means.K:
            raise ValueError(f"M={self.M} must satisfy 1 <= M < K={self.means.K}")
        if self.delta == 0.0:
            object.__setattr__(self, "delta", self.min_half_gap / 2)
        if not 0.0 < self.delta < self.min_half_gap:
            raise ValueError(f"delta={self.delta} must lie in (0, {self.min_half_gap})")

    @classmethod
    def of(cls, means: ArmMeans | Sequence[float], M: int, delta: float = 0.0) -> InstanceTruth:
        return cls(means if isinstance(means, ArmMeans) else ArmMeans(means), M, delta)

    @property
    def sorted_means(self) -> list[float]:
        return sorted(self.means.means, reverse=True)

    @property
    def min_half_gap(self) -> float:
        s = self.sorted_means
        return min(a - b for a, b in zip(s, s[1:])) / 2

    @property
    def mu_M(self) -> float:
        return self.sorted_means[self.M - 1]

    @property
    def best_arms(self) -> frozenset[int]:
        return frozenset(self.means.top(self.M))

    @property
    def suboptimal_arms(self) -> list[int]:
        return [k for k in range(1, self.means.K + 1) if k not in self.best_arms]

    @property
    def lower_bound_constant(self) -> float:
        return lower_bound_constant(self.means, self.M)

    def t0(self, k: int, T: int) -> float:
        """Sample budget (ln T + 4 ln ln T) / kl(mu_k + delta, mu_M - delta) of arm k."""
        lt = math.log(T)
        rate = lt + 4 * math.log(lt) if lt > 1 else lt
        return rate / kl_bernoulli(self.means[k] + self.delta, self.mu_M - self.delta)

    def exploitation_budget(self, k: int, T: int) -> float:
        return self.t0(k, T) + 4 + 2 / self.delta**2


class RegretMeter:
    """Cumulative pseudo-regret from per-arm play counts.

    ``zeroed`` counts a collided play as zero reward; ``literal`` does not.
    Values are recomputed exactly from counts with ``math.fsum``.
    """

    def __init__(self, means: ArmMeans, M: int):
        self.mu = means.means
        self.top = means.top(M)
        self.plays = [0] * means.K
        self.clean = [0] * means.K
        self.t = 0

    def add(self, selections: Sequence[int], collided: frozenset[int]) -> None:
        self.t += 1
        plays, clean = self.plays, self.clean
        for a in selections:
            plays[a - 1] += 1
        if collided:
            for a in selections:
                if a not in collided:
                    clean[a - 1] += 1
        else:
            for a in selections:
                clean[a - 1] += 1

    def _regret(self, counts: list[int]) -> float:
        mu = self.mu
        terms = [self.t * mu[k - 1] for k in self.top]
        terms += [-c * m for c, m in zip(counts, mu) if c]
        return math.fsum(terms)

    @property
    def zeroed(self) -> float:
        # nonnegative in exact arithmetic; clamp product rounding
        return max(0.0, self._regret(self.clean))

    @property
    def literal(self) -> float:
        return self._regret(self.plays)


def regret_accumulate(
    trace: Iterable[RoundLog], truth: InstanceTruth
) -> list[tuple[int, float, float]]:
    """Per-round ``(t, cumulative zeroed regret, cumulative literal regret)``."""
    meter = RegretMeter(truth.means, truth.M)
    out = []
    for log in trace:
        meter.add(log.selections, log.collided_arms)
        out.append((log.round, meter.zeroed, meter.literal))
    return out


class LeaderRecord(NamedTuple):
    best_set: tuple[int, ...]
    frozen_means: Sequence[float]
    frozen_indices: Sequence[float]
    rho: int


@dataclass
class RoundCounters:
    tally_A: int = 0
    tally_D: int = 0
    tally_E: int = 0
    tally_G: int = 0
    tally_C: dict[int, int] = field(default_factory=dict)
    t0_per_arm: dict[int, float] = field(default_factory=dict)
    unexplained_bad_rounds: int = 0
    comm_rounds: int = 0
    init_rounds: int = 0
    collisions: int = 0
    rounds: int = 0


class BadRoundCounter:
    """Streaming tallies of the sets A, D, E, G and C_k over leader rounds.

    ``set_view`` is called whenever the leader's frozen statistics or set in
    force change; ``tick`` once per counted round with the leader's choice.
    """

    def __init__(self, truth: InstanceTruth):
        self.truth = truth
        self.counters = RoundCounters(tally_C={k: 0 for k in truth.suboptimal_arms})
        self._flags = (False, False, False, False)
        self._mu = truth.means.means
        self._star = truth.best_arms

    def set_view(self, best_set: Sequence[int], frozen_means: Sequence[float],
                 frozen_indices: Sequence[float]) -> None:
        mu = self._mu
        delta = self.truth.delta
        in_A = in_D = in_E = False
        for k in best_set:
            if k not in self._star:
                in_A = True
            if abs(frozen_means[k - 1] - mu[k - 1]) >= delta:
                in_D = True
        for k in self._star:
            if frozen_indices[k - 1] < mu[k - 1]:
                in_E = True
                break
        in_G = in_A and not (in_D or in_E) and any(
            abs(frozen_means[k - 1] - mu[k - 1]) >= delta
            for k in self._star if k not in best_set
        )
        self._flags = (in_A, in_D, in_E, in_G)

    def tick(self, rho: int) -> None:
        in_A, in_D, in_E, in_G = self._flags
        c = self.counters
        c.rounds += 1
        c.tally_A += in_A
        c.tally_D += in_D
        c.tally_E += in_E
        c.tally_G += in_G
        if (in_A or in_D) and not (in_D or in_E or in_G):
            c.unexplained_bad_rounds += 1
        if not (in_A or in_D) and rho in c.tally_C:
            c.tally_C[rho] += 1

    def snapshot(self, horizon: int) -> RoundCounters:
        c = self.counters
        return RoundCounters(
            c.tally_A, c.tally_D, c.tally_E, c.tally_G, dict(c.tally_C),
            {k: self.truth.t0(k, horizon) for k in c.tally_C},
            c.unexplained_bad_rounds, c.comm_rounds, c.init_rounds, c.collisions, c.rounds,
        )


def count_bad_rounds(
    records: Iterable[LeaderRecord], truth: InstanceTruth, horizon: int
) -> RoundCounters:
    counter = BadRoundCounter(truth)
    last = None
    for rec in records:
        view = (rec.best_set, tuple(rec.frozen_means), tuple(rec.frozen_indices))
        if view != last:
            counter.set_view(*view)
            last = view
        counter.tick(rec.rho)
    return counter.snapshot(horizon)


@dataclass(frozen=True)
class Lemma2Result:
    M: int
    truncation: int
    partial_sum: float
    tail_bound: float
    majorant_decreasing: bool

    @property
    def total(self) -> float:
        return self.partial_sum + self.tail_bound

    @property
    def passed(self) -> bool:
        return self.majorant_decreasing and self.total <= 15.0


def _lemma2_majorant_decreasing(y_start: float) -> bool:
    # u(x) = g(ln x) / x with g(y) = (y^2 + 4 y ln y + 1) / y^4 bounds every term
    # from above; u decreases iff g'(y) < g(y).
    y = np.geomspace(y_start, 1e6, 200_000)
    g = (y**2 + 4 * y * np.log(y) + 1) / y**4
    dg = (2 * y + 4 * np.log(y) + 4) / y**4 - 4 * (y**2 + 4 * y * np.log(y) + 1) / y**5
    return bool(np.all(dg < g))


def lemma2_constant(M: int, truncation: int = 1_000_000) -> Lemma2Result:
    """Truncated value of e M sum_s ceil((log sM + 4 log log sM) log sM) / (sM (log sM)^4)
    plus an integral bound on the tail beyond ``truncation``.
    """
    if truncation < 10_000:
        raise ValueError(f"truncation={truncation} below the minimum of 10000")
    if M < 1:
        raise ValueError("M must be positive")
    x = np.arange(1, truncation + 1, dtype=np.float64) * M
    x = x[x > math.e]
    y = np.log(x)
    rate = y + 4 * np.log(y)
    terms = np.ceil(rate * y) * np.exp(-rate)
    partial = math.e * M * math.fsum(terms)
    Y = math.log(truncation * M)
    # e M * integral_{truncation}^inf u(sM) ds with u as above
    tail = math.e * (1 / Y + (2 * math.log(Y) + 1) / Y**2 + 1 / (3 * Y**3))
    return Lemma2Result(M, truncation, partial, tail, _lemma2_majorant_decreasing(Y))


@dataclass(frozen=True)
class ConcentrationExperiment:
    c: float
    delta: float
    arm_mean: float = 0.5
    horizon: int = 100_000
    trials: int = 1000

    def __post_init__(self):
        if not 0.0 < self.c <= 1.0:
            raise ValueError(f"c={self.c} not in (0, 1]")
        if self.delta <= 0:
            raise ValueError(f"delta={self.delta} must be positive")
        if not 0.0 < self.arm_mean < 1.0:
            raise ValueError(f"arm_mean={self.arm_mean} not in (0, 1)")

    @property
    def bound(self) -> float:
        return 2 / self.c * (2 / self.c + 1 / self.delta**2)


def lemma1_monte_carlo(
    exp: ConcentrationExperiment, seed: int, batch: int = 20
) -> tuple[float, float]:
    """Estimate sum_n P[n in H, |mu_hat(n) - mu| >= delta] with H = every round.

    In each round an independent coin with P[1] = c decides whether the arm is
    sampled; mu_hat(n) uses samples from rounds before n (0 with none).
    """
    if exp.trials < 1000:
        raise ValueError(f"trials={exp.trials} below the minimum of 1000")
    rng = np.random.default_rng(seed)
    n = exp.horizon
    mu, delta = exp.arm_mean, exp.delta
    total = 0
    done = 0
    while done < exp.trials:
        b = min(batch, exp.trials - done)
        coins = rng.random((b, n)) < exp.c
        rewards = (rng.random((b, n)) < mu) & coins
        count = np.zeros((b, n), dtype=np.int32)
        np.cumsum(coins[:, :-1], axis=1, out=count[:, 1:])
        ssum = np.zeros((b, n), dtype=np.int32)
        np.cumsum(rewards[:, :-1], axis=1, out=ssum[:, 1:])
        fired = np.abs(ssum - mu * count) >= delta * count
        fired[count == 0] = mu >= delta
        total += int(fired.sum())
        done += b
    return total / exp.trials, exp.bound
