"""Warehouse-assignment + last-mile routing simulator with learned policies."""

from .config import RunConfig, parse_config
from .episode import AgentBundle, make_agents, run_episode
from .errors import ConfigError, InfeasibleActionError, InvariantViolation, OrderStateError, TripRejected
from .experiments import evaluate, oracle_check, train, train_gae
from .world import EnvParams, WorldState, new_world

__version__ = "0.1.0"

__all__ = [
    "AgentBundle",
    "ConfigError",
    "EnvParams",
    "InfeasibleActionError",
    "InvariantViolation",
    "OrderStateError",
    "RunConfig",
    "TripRejected",
    "WorldState",
    "evaluate",
    "make_agents",
    "new_world",
    "oracle_check",
    "parse_config",
    "run_episode",
    "train",
    "train_gae",
    "__version__",
]
