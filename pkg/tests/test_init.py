import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpelab.harness import simulate_initialization
from dpelab.init_phase import InitError, InitState, Phase, init_observe, init_result, init_select


class _FixedRng:
    def __init__(self, value):
        self.value = value

    def randrange(self, a, b):
        assert a <= self.value < b
        return self.value


def _satisfied(K, arm):
    st_ = InitState(K)
    st_.internal_state = arm
    return st_


def test_satisfied_player_signals_in_own_round():
    s = _satisfied(5, 3)
    assert init_select(s, random.Random(0)) == 3
    s.observe(False)
    picks = []
    for _ in range(5):
        picks.append(init_select(s, random.Random(0)))
        init_observe(s, False)
    # communication round r=3 is the one where the state-3 player plays K
    assert picks == [3, 3, 5, 3, 3]


def test_unsatisfied_player_plays_K_in_comm_rounds():
    s = InitState(5)
    s.select(_FixedRng(2))
    s.observe(True)
    assert s.internal_state == 0
    for _ in range(5):
        assert s.select(random.Random(0)) == 5
        s.observe(True)
    assert s.phase is Phase.ORTHOGONALIZATION


def test_probe_without_collision_adopts_arm():
    s = InitState(5)
    assert s.select(_FixedRng(2)) == 2
    s.observe(False)
    assert s.internal_state == 2


def test_clean_block_moves_to_rank_assignment():
    s = InitState(4)
    s.select(_FixedRng(1))
    for _ in range(5):
        s.observe(False)
        if s.phase is Phase.ORTHOGONALIZATION:
            s.select(random.Random(0))
    assert s.phase is Phase.RANK_ASSIGNMENT
    assert s.occupancy == [True, False, False]


def test_sweep_player_walks_the_arms():
    K = 7
    s = _satisfied(K, 2)
    s.phase = Phase.RANK_ASSIGNMENT
    s.rank_block = 2
    s.position_in_block = 4
    assert s.select(random.Random(0)) == 5
    other = _satisfied(K, 3)
    other.phase = Phase.RANK_ASSIGNMENT
    other.rank_block = 2
    assert other.select(random.Random(0)) == 3


def test_quiet_rank_block_leaves_occupancy_false():
    K = 6
    s = _satisfied(K, 1)
    s.phase = Phase.RANK_ASSIGNMENT
    s.occupancy = [True] + [False] * (K - 2)
    s.rank_block = 4
    for _ in range(K - 1):
        s.select(random.Random(0))
        s.observe(False)
    assert s.occupancy[3] is False
    assert s.rank_block == 5


def test_result_rank_from_occupancy():
    s = _satisfied(5, 4)
    s.phase = Phase.DONE
    s.occupancy = [True, False, False, True]
    out = init_result(s)
    assert (out.rank, out.num_players) == (2, 2)


def test_errors_outside_phase():
    s = InitState(4)
    with pytest.raises(InitError):
        init_result(s)
    s.phase = Phase.DONE
    with pytest.raises(InitError):
        s.select(random.Random(0))
    with pytest.raises(InitError):
        s.observe(False)


@pytest.mark.parametrize("seed", range(5))
def test_lone_player(seed):
    run = simulate_initialization(3, 1, seed, 10**4)
    assert run.ranks == [1] and run.reported_M == [1]
    # one clean orthogonalization block then K-1 rank blocks of K-1 rounds
    assert run.duration == 4 + 2 * 2


def test_k5_m3_many_seeds():
    for seed in range(10_000):
        run = simulate_initialization(5, 3, seed, 10**6)
        assert sorted(run.ranks) == [1, 2, 3], seed
        assert run.reported_M == [3, 3, 3], seed
        assert len(set(run.held_arms)) == 3 and set(run.held_arms) <= {1, 2, 3, 4}, seed
        assert len(set(run.exit_rounds)) == 1, seed


@given(st.integers(2, 9).flatmap(lambda K: st.tuples(st.just(K), st.integers(1, K - 1))),
       st.integers(0, 2**40))
def test_initialization_postconditions(km, seed):
    K, M = km
    run = simulate_initialization(K, M, seed, 10**6)
    assert sorted(run.ranks) == list(range(1, M + 1))
    assert set(run.reported_M) == {M}
    assert len(set(run.held_arms)) == M
    assert all(1 <= a <= K - 1 for a in run.held_arms)
    # ranks follow the order of held arms
    order = sorted(range(M), key=lambda i: run.held_arms[i])
    assert [run.ranks[i] for i in order] == list(range(1, M + 1))
    assert len(set(run.exit_rounds)) == 1
    assert (run.duration - (K - 1) ** 2) % (K + 1) == 0


def test_duration_independent_of_horizon():
    short = [simulate_initialization(6, 3, s, 10**3).duration for s in range(300)]
    long = [simulate_initialization(6, 3, s, 10**6).duration for s in range(300)]
    assert short == long
