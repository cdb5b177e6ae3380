"""Locally interdependent multi-agent MDPs, Cutoff solving and policy extraction."""
from .cutoff_solver import CutoffConfig, CutoffSolution, solve_cutoff
from .geometry import MetricSpace, is_finer, partition_intersection, proximity_partition
from .mmdp import (LIMMDP, TabularModel, communication_partition, dependence_partition,
                   joint_reward, r_tilde, validate_model)
from .policy_extraction import MemoryConfig, MemoryPolicy, TrivialPolicy
from .rollout_engine import expected_return, horizon_for, rollout

__version__ = "0.1.0"
