"""Simulation lab for collision-sensing multiplayer bandits and the DPE protocol."""

from .agents import DPEPlayer, Follower, Leader, ProtocolViolation, comm_schedule, slot_of
from .baselines import CentralizedController, oracle_select
from .diagnostics import InstanceTruth, lower_bound_constant, regret_accumulate
from .env import ArmMeans, Environment, Feedback, new_env, optimal_round_reward
from .harness import Config, parse_config, run_experiment
from .index import exploration_rate, kl_bernoulli, klucb_index

__all__ = [
    "ArmMeans", "CentralizedController", "Config", "DPEPlayer", "Environment", "Feedback",
    "Follower", "InstanceTruth", "Leader", "ProtocolViolation", "comm_schedule",
    "exploration_rate", "kl_bernoulli", "klucb_index", "lower_bound_constant", "new_env",
    "optimal_round_reward", "oracle_select", "parse_config", "regret_accumulate",
    "run_experiment", "slot_of",
]
