"""DPE exploration-exploitation agents and the collision codec.

After initialization the rank-1 player becomes the :class:`Leader` and the
others become :class:`Follower` instances. Agents only ever see their own
feedback; the harness drives them through ``select(t, rng)`` and
``observe(t, feedback)``.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .env import Feedback
from .index import DEFAULT_TOLERANCE, exploration_rate, klucb_indices
from .init_phase import InitOutcome, InitState


class ProtocolViolation(RuntimeError):
    """A follower received a collision pattern that is not a valid message."""


def slot_of(t: int, rank: int, M: int) -> int:
    """Slot (1..M) played at round ``t`` by the player of rank ``rank``."""
    return (t + rank) % M + 1


@dataclass
class OrderedBestSet:
    slots: list[int]
    pivot_slot: int = 1

    @property
    def pivot(self) -> int:
        return self.slots[self.pivot_slot - 1]

    def replace(self, slot: int, arm: int) -> None:
        if arm in self.slots:
            raise ValueError(f"arm {arm} already in the best set")
        self.slots[slot - 1] = arm

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.slots)


def best_set_swaps(slots: Sequence[int], means: Sequence[float]) -> list[tuple[int, int]]:
    """Slot replacements that turn ``slots`` into an M-best set for ``means``.

    Incumbents are kept unless an outside arm has a strictly larger mean; the
    weakest incumbent (lowest arm index on ties) is replaced by the strongest
    challenger (lowest arm index on ties). ``means`` is indexed by arm - 1.
    Returns ``(leaving_slot, entering_arm)`` pairs in ascending slot order.
    """
    current = list(slots)
    K = len(means)
    inside = set(current)
    outside_best = max((means[k - 1] for k in range(1, K + 1) if k not in inside), default=None)
    if outside_best is None or outside_best <= min(means[a - 1] for a in current):
        return []
    swaps = []
    while True:
        inside = set(current)
        outside = [k for k in range(1, K + 1) if k not in inside]
        if not outside:
            break
        weakest = min(range(len(current)), key=lambda i: (means[current[i] - 1], current[i]))
        challenger = min(outside, key=lambda k: (-means[k - 1], k))
        if means[challenger - 1] > means[current[weakest] - 1]:
            swaps.append((weakest + 1, challenger))
            current[weakest] = challenger
        else:
            break
    return sorted(swaps)


@dataclass(frozen=True)
class CommPlan:
    """Round-by-round leader schedule for one (leaving slot, entering arm) message.

    One sub-block of M+K+1 rounds per follower rank 2..M. In the sub-block of
    rank r the leader copies the follower's arm at relative rounds 1 (signal),
    1 + leaving_slot and 1 + M + entering_arm; otherwise she plays her own slot.
    """

    M: int
    K: int
    phase_start: int
    leaving_slot: int
    entering_arm: int
    leader_arms: tuple[int, ...]

    @property
    def block_length(self) -> int:
        return self.M + self.K + 1

    @property
    def length(self) -> int:
        return (self.M - 1) * self.block_length

    @property
    def end(self) -> int:
        return self.phase_start + self.length - 1

    def sub_block(self, rank: int) -> tuple[int, int]:
        """Absolute first and last round of the sub-block for ``rank``."""
        first = self.phase_start + (rank - 2) * self.block_length
        return first, first + self.block_length - 1

    def offsets(self) -> tuple[int, int, int]:
        """Relative rounds (1-based, within a sub-block) at which the leader collides."""
        return 1, 1 + self.leaving_slot, 1 + self.M + self.entering_arm

    def collision_rounds(self, rank: int) -> list[int]:
        first, _ = self.sub_block(rank)
        return [first + off - 1 for off in self.offsets()]

    def leader_arm(self, t: int) -> int:
        return self.leader_arms[t - self.phase_start]


def comm_schedule(
    M: int,
    K: int,
    phase_start: int,
    leaving_slot: int,
    entering_arm: int,
    follower_arm: Callable[[int, int], int],
) -> CommPlan:
    """Build the leader's schedule; ``follower_arm(t, rank)`` is the arm of ``rank`` at ``t``."""
    if not 1 <= leaving_slot <= M:
        raise ValueError(f"leaving_slot {leaving_slot} not in 1..{M}")
    if not 1 <= entering_arm <= K:
        raise ValueError(f"entering_arm {entering_arm} not in 1..{K}")
    L = M + K + 1
    hits = {0, leaving_slot, M + entering_arm}
    arms = []
    for rel in range((M - 1) * L):
        t = phase_start + rel
        if rel % L in hits:
            arms.append(follower_arm(t, rel // L + 2))
        else:
            arms.append(follower_arm(t, 1))
    return CommPlan(M, K, phase_start, leaving_slot, entering_arm, tuple(arms))


def decode_message(M: int, K: int, collision_offsets: Sequence[int]) -> tuple[int, int]:
    """Invert the message part of a sub-block.

    ``collision_offsets`` are the rounds after the signal (1..M+K) in which the
    follower collided. Exactly one must fall in 1..M and one in M+1..M+K.
    """
    slot_hits = [o for o in collision_offsets if 1 <= o <= M]
    arm_hits = [o - M for o in collision_offsets if M < o <= M + K]
    if len(slot_hits) != 1 or len(arm_hits) != 1:
        raise ProtocolViolation(
            f"malformed message: {len(slot_hits)} slot collisions, {len(arm_hits)} arm collisions"
        )
    return slot_hits[0], arm_hits[0]


class Leader:
    """Rank-1 player: keeps statistics, explores at the pivot slot, signals set changes."""

    rank = 1

    def __init__(self, K: int, M: int, tolerance: float = DEFAULT_TOLERANCE):
        self.K = K
        self.M = M
        self.tolerance = tolerance
        self.pulls = [0] * K
        self.sums = [0] * K
        self.frozen_means = [0.0] * K
        # zero pulls give index 1
        self.frozen_indices = [1.0] * K
        self.best = OrderedBestSet(list(range(1, M + 1)))
        self.candidates: list[int] = []
        self.comm: CommPlan | None = None
        self.pending: deque[tuple[int, int]] = deque()
        self.rho = 0
        self.explored = False
        self.comm_round = False
        self.version = 0
        self.swaps_emitted = 0
        self.phases_started = 0
        self.comm_rounds = 0
        self._updated_at = -1
        self._refresh()

    @property
    def best_set(self) -> tuple[int, ...]:
        return self.best.as_tuple()

    @property
    def live_means(self) -> list[float]:
        return [s / n if n else 0.0 for s, n in zip(self.sums, self.pulls)]

    @property
    def in_comm(self) -> bool:
        return self.comm is not None

    def _refresh(self) -> None:
        means = self.frozen_means
        slots = self.best.slots
        pivot = 0
        for i in range(1, self.M):
            a, b = slots[i], slots[pivot]
            if means[a - 1] < means[b - 1] or (means[a - 1] == means[b - 1] and a < b):
                pivot = i
        self.best.pivot_slot = pivot + 1
        threshold = means[slots[pivot] - 1]
        index = self.frozen_indices
        self.candidates = [
            k for k in range(1, self.K + 1) if index[k - 1] >= threshold and k not in slots
        ]
        self.version += 1

    def block_update(self, t: int) -> list[tuple[int, int]]:
        """Freeze statistics at a block boundary and detect set changes."""
        if t % self.M:
            raise ValueError(f"block update at t={t} is off the block boundary")
        if self.comm is not None:
            raise RuntimeError("block update during a communication phase")
        self._updated_at = t
        self.frozen_means = means = self.live_means
        self.frozen_indices = klucb_indices(
            np.array(means), np.array(self.pulls), exploration_rate(t), self.tolerance
        ).tolist()
        swaps = best_set_swaps(self.best.slots, self.frozen_means)
        self.swaps_emitted += len(swaps)
        if swaps and self.M > 1:
            self.pending.extend(swaps)
            self._start_phase(t)
        else:
            for slot, arm in swaps:
                self.best.replace(slot, arm)
        self._refresh()
        return swaps

    def _follower_arm(self, t: int, rank: int) -> int:
        return self.best.slots[(t + rank) % self.M]

    def _start_phase(self, t: int) -> None:
        slot, arm = self.pending.popleft()
        self.comm = comm_schedule(self.M, self.K, t, slot, arm, self._follower_arm)
        self.phases_started += 1

    def select(self, t: int, rng: random.Random) -> int:
        if self.comm is None and t % self.M == 0 and self._updated_at != t:
            self.block_update(t)
        if self.comm is not None:
            self.comm_round = True
            self.explored = False
            self.rho = self.comm.leader_arm(t)
            return self.rho
        self.comm_round = False
        m = (t + 1) % self.M
        arm = self.best.slots[m]
        self.explored = False
        if self.candidates and m == self.best.pivot_slot - 1 and rng.random() >= 0.5:
            arm = self.candidates[rng.randrange(len(self.candidates))]
            self.explored = True
        self.rho = arm
        return arm

    def observe(self, t: int, feedback: Feedback) -> None:
        if self.comm_round:
            # rewards seen while signalling are discarded
            self.comm_rounds += 1
            if t == self.comm.end:
                self.best.replace(self.comm.leaving_slot, self.comm.entering_arm)
                self.comm = None
                if self.pending:
                    self._start_phase(t + 1)
                self._refresh()
            return
        if not feedback.collision:
            k = self.rho - 1
            self.pulls[k] += 1
            self.sums[k] += feedback.reward


class Follower:
    """Rank >= 2 player: plays its rotating slot of the set in force and decodes messages."""

    def __init__(self, K: int, M: int, rank: int):
        if not 2 <= rank <= M:
            raise ValueError(f"follower rank {rank} not in 2..{M}")
        self.K = K
        self.M = M
        self.rank = rank
        self.best = OrderedBestSet(list(range(1, M + 1)))
        self.signal_time: int | None = None
        self.collision_offsets: list[int] = []
        self.pending: tuple[int, int] | None = None
        self.apply_at = 0
        self.sets_applied = 0

    @property
    def best_set(self) -> tuple[int, ...]:
        return self.best.as_tuple()

    @property
    def in_comm(self) -> bool:
        return self.signal_time is not None or self.pending is not None

    def select(self, t: int, rng: random.Random | None = None) -> int:
        return self.best.slots[(t + self.rank) % self.M]

    def observe(self, t: int, feedback: Feedback) -> None:
        M, K = self.M, self.K
        if self.signal_time is not None:
            offset = t - self.signal_time
            if feedback.collision:
                self.collision_offsets.append(offset)
            if offset == M + K:
                self.pending = decode_message(M, K, self.collision_offsets)
                self.apply_at = self.signal_time + (M - self.rank + 1) * (M + K + 1) - 1
                self.signal_time = None
                self.collision_offsets = []
        elif self.pending is not None:
            if feedback.collision:
                raise ProtocolViolation(f"collision at t={t} while waiting for the phase to end")
        elif feedback.collision:
            self.signal_time = t
            self.collision_offsets = []
        if self.pending is not None and t == self.apply_at:
            self.best.replace(*self.pending)
            self.pending = None
            self.sets_applied += 1


def leader_block_update(state: Leader, t: int) -> list[tuple[int, int]]:
    return state.block_update(t)


def leader_select(state: Leader, t: int, rng: random.Random) -> int:
    return state.select(t, rng)


def leader_observe(state: Leader, t: int, feedback: Feedback) -> Leader:
    state.observe(t, feedback)
    return state


def follower_select(state: Follower, t: int) -> int:
    return state.select(t)


def follower_observe(state: Follower, t: int, feedback: Feedback) -> Follower:
    state.observe(t, feedback)
    return state


class DPEPlayer:
    """One decentralized player: initialization, then leader or follower."""

    def __init__(self, K: int, tolerance: float = DEFAULT_TOLERANCE):
        self.K = K
        self.tolerance = tolerance
        self.init = InitState(K)
        self.outcome: InitOutcome | None = None
        self.role: Leader | Follower | None = None

    @property
    def initializing(self) -> bool:
        return self.role is None

    def select(self, t: int, rng: random.Random) -> int:
        if self.role is None:
            return self.init.select(rng)
        return self.role.select(t, rng)

    def observe(self, t: int, feedback: Feedback) -> None:
        if self.role is not None:
            self.role.observe(t, feedback)
            return
        self.init.observe(feedback.collision)
        if self.init.done:
            self.outcome = out = self.init.result()
            if out.rank == 1:
                self.role = Leader(self.K, out.num_players, self.tolerance)
            else:
                self.role = Follower(self.K, out.num_players, out.rank)
