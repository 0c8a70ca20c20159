"""Loop-nest optimization gym: transformable loop IR, cost backends, an RL
environment with masked multi-part actions, a PPO agent, and an exhaustive
baseline scheduler."""

from .features import EnvLimits
from .ir import LinalgOp, OpKind, build_operation, generate_dataset
from .envs import LoopEnv, RewardMode, run_schedule
from .cost import AnalyticBackend, CostConfig, MeasuredBackend
from .transforms import (Schedule, Tiling, Parallelization, Interchange,
                         Im2col, Vectorization, schedule_from_json,
                         schedule_to_json)
from .autosched import SearchConstraints, search
from .agent import PPOConfig, Policy, train
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "AnalyticBackend", "CostConfig", "EnvLimits", "Im2col", "Interchange",
    "LinalgOp", "LoopEnv", "MeasuredBackend", "OpKind", "PPOConfig", "Policy",
    "Parallelization", "RewardMode", "RunConfig", "Schedule",
    "SearchConstraints", "Tiling", "Vectorization", "build_operation",
    "generate_dataset", "run_schedule", "schedule_from_json",
    "schedule_to_json", "search", "train",
]
