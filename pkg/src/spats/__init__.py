"""Leader/follower synchronization of two-time-scale linear agents.

Each agent's plant is split exactly into slow and fast subsystems, a
local optimal gain is designed for each, and the agents are coupled
over a directed communication graph with a leader.
"""
from .decompose import (
    CONTINUOUS,
    DISCRETE,
    ChangDecomposition,
    PartitionedLinearModel,
    partition_full_model,
    verify_decomposition,
)
from .errors import InputError, NumericError, SpatsError
from .protocol import CommGraph, SynchronizationGains, build_graph, certificate
from .sim import Scenario, TrajectoryLog, compute_metrics, simulate

__version__ = "0.1.0"

__all__ = [
    "CONTINUOUS",
    "DISCRETE",
    "ChangDecomposition",
    "CommGraph",
    "InputError",
    "NumericError",
    "PartitionedLinearModel",
    "Scenario",
    "SpatsError",
    "SynchronizationGains",
    "TrajectoryLog",
    "build_graph",
    "certificate",
    "compute_metrics",
    "partition_full_model",
    "simulate",
    "verify_decomposition",
]
