"""Initialization: orthogonalization onto arms 1..K-1, then rank assignment.

Each player runs its own :class:`InitState`; the only coupling between players
is the collision flag returned by the environment.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field


class Phase(enum.Enum):
    ORTHOGONALIZATION = "orthogonalization"
    RANK_ASSIGNMENT = "rank_assignment"
    DONE = "done"


class InitError(RuntimeError):
    pass


@dataclass(frozen=True)
class InitOutcome:
    rank: int
    num_players: int
    duration_rounds: int
    arm: int


@dataclass
class InitState:
    """Per-player initialization state machine.

    ``internal_state`` is 0 while the player has no arm, else the arm it holds.
    Orthogonalization runs in blocks of K+1 rounds (one probe round, K signalling
    rounds); rank assignment runs K-1 blocks of K-1 rounds.
    """

    K: int
    internal_state: int = 0
    phase: Phase = Phase.ORTHOGONALIZATION
    position_in_block: int = 0
    block_collision_seen: bool = False
    occupancy: list[bool] = field(default_factory=list)
    rank_block: int = 0
    rounds: int = 0
    orthogonalization_rounds: int = 0
    _probe: int = 0

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValueError("initialization needs K >= 2")
        if not self.occupancy:
            self.occupancy = [False] * (self.K - 1)

    @property
    def done(self) -> bool:
        return self.phase is Phase.DONE

    def select(self, rng: random.Random) -> int:
        K = self.K
        pos = self.position_in_block
        if self.phase is Phase.ORTHOGONALIZATION:
            if pos == 0:
                if self.internal_state:
                    return self.internal_state
                self._probe = rng.randrange(1, K)
                return self._probe
            if self.internal_state == 0 or self.internal_state == pos:
                return K
            return self.internal_state
        if self.phase is Phase.RANK_ASSIGNMENT:
            if self.internal_state == self.rank_block:
                return pos + 1
            return self.internal_state
        raise InitError("init_select called after initialization finished")

    def observe(self, collision: bool) -> None:
        K = self.K
        self.rounds += 1
        if self.phase is Phase.ORTHOGONALIZATION:
            if self.position_in_block == 0 and self.internal_state == 0 and not collision:
                self.internal_state = self._probe
            if collision:
                self.block_collision_seen = True
            self.position_in_block += 1
            if self.position_in_block == K + 1:
                self.position_in_block = 0
                if self.block_collision_seen:
                    self.block_collision_seen = False
                else:
                    self.orthogonalization_rounds = self.rounds
                    self.phase = Phase.RANK_ASSIGNMENT
                    self.rank_block = 1
                    self.occupancy[self.internal_state - 1] = True
            return
        if self.phase is Phase.RANK_ASSIGNMENT:
            if collision and self.rank_block != self.internal_state:
                self.occupancy[self.rank_block - 1] = True
            self.position_in_block += 1
            if self.position_in_block == K - 1:
                self.position_in_block = 0
                self.rank_block += 1
                if self.rank_block == K:
                    self.phase = Phase.DONE
            return
        raise InitError("init_observe called after initialization finished")

    def result(self) -> InitOutcome:
        if not self.done:
            raise InitError("init_result called before initialization finished")
        own = self.internal_state
        return InitOutcome(
            rank=1 + sum(self.occupancy[: own - 1]),
            num_players=sum(self.occupancy),
            duration_rounds=self.rounds,
            arm=own,
        )


def init_select(state: InitState, rng: random.Random) -> int:
    return state.select(rng)


def init_observe(state: InitState, collision: bool) -> InitState:
    state.observe(collision)
    return state


def init_result(state: InitState) -> InitOutcome:
    return state.result()
