"""Episodic optimization environment: reset on an op, step on actions,
log-speedup rewards under the Immediate or Final regime."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .cost import AnalyticBackend, CostConfig
from .errors import EpisodeDone, LimitExceeded, MaskedAction
from .features import EnvLimits, HistoryTensor, extract, record_history
from .ir import LinalgOp
from .transforms import (Action, ActionMask, Schedule, Vectorization,
                         apply_action, compute_mask, mask_permits)

TIMEOUT_PENALTY = -5.0  # natural-log units; worse than any plausible outcome


class RewardMode(str, Enum):
    IMMEDIATE = "immediate"
    FINAL = "final"


@dataclass
class EnvState:
    current_op: LinalgOp
    base_cost: float
    prev_cost: float
    schedule: Schedule
    history: HistoryTensor
    step_index: int = 0
    done: bool = False
    final_cost: Optional[float] = None
    base_time: Optional[float] = None  # wall-clock base for the timeout rule


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    mask: ActionMask
    info: dict


class LoopEnv:
    """One episode optimizes one operation; instances are single-threaded."""

    def __init__(self, limits: Optional[EnvLimits] = None,
                 cost_cfg: Optional[CostConfig] = None,
                 mode: RewardMode = RewardMode.FINAL,
                 backend=None):
        self.limits = limits or EnvLimits()
        self.cost_cfg = cost_cfg or CostConfig()
        self.mode = RewardMode(mode)
        self.backend = backend or AnalyticBackend(self.cost_cfg)
        self.state: Optional[EnvState] = None

    def reset(self, op: LinalgOp) -> StepResult:
        limits = self.limits
        if op.n > limits.N or len(op.loads) > limits.L:
            raise LimitExceeded(f"op exceeds limits N={limits.N}, L={limits.L}")
        report = self.backend.cost(op)
        base = report.total
        self.state = EnvState(
            current_op=op, base_cost=base, prev_cost=base,
            schedule=Schedule(), history=HistoryTensor.empty(limits),
            base_time=base if self.backend.name == "measured" else None,
        )
        obs = extract(op, self.state.history, limits)
        mask = compute_mask(op, self.state.schedule, 0, limits)
        return StepResult(obs, 0.0, False, mask,
                          {"cost": base, "speedup": 1.0, "error": None})

    def step(self, action: Action) -> StepResult:
        st = self.state
        if st is None or st.done:
            raise EpisodeDone("episode is finished; call reset()")
        mask = compute_mask(st.current_op, st.schedule, st.step_index, self.limits)
        if not mask_permits(st.current_op, mask, action, self.limits):
            raise MaskedAction(f"action {action!r} forbidden by mask")

        n_before = st.current_op.n
        new_op = apply_action(st.current_op, action, self.limits.N)
        st.history = record_history(st.history, action, st.step_index, n_before)
        st.schedule = st.schedule.appended(action)
        st.current_op = new_op
        st.step_index += 1

        terminal = isinstance(action, Vectorization) or st.step_index >= self.limits.tau
        reward = 0.0
        cost = None
        speedup = None
        timed_out = False

        if self.mode is RewardMode.IMMEDIATE:
            report = self.backend.cost(new_op, base_time=st.base_time)
            if report.timed_out:
                timed_out = True
            else:
                cost = report.total
                reward = math.log(st.prev_cost / cost)
                st.prev_cost = cost
                speedup = st.base_cost / cost
        elif terminal:
            report = self.backend.cost(new_op, base_time=st.base_time)
            if report.timed_out:
                timed_out = True
            else:
                cost = report.total
                reward = math.log(st.base_cost / cost)
                speedup = st.base_cost / cost

        if timed_out:
            reward = TIMEOUT_PENALTY
            terminal = True

        st.done = terminal
        if terminal and cost is not None:
            st.final_cost = cost
        obs = extract(new_op, st.history, self.limits)
        next_mask = compute_mask(new_op, st.schedule, st.step_index, self.limits)
        return StepResult(obs, reward, terminal, next_mask,
                          {"cost": cost, "speedup": speedup,
                           "error": "timeout" if timed_out else None})

    @property
    def episode_speedup(self) -> Optional[float]:
        st = self.state
        if st is None or st.final_cost is None:
            return None
        return st.base_cost / st.final_cost


def run_schedule(op: LinalgOp, schedule: Schedule,
                 cfg: Optional[CostConfig] = None,
                 backend=None, max_loops: int = 7) -> Tuple[LinalgOp, float]:
    """Fold the schedule over the op; speedup = base cost / final cost."""
    backend = backend or AnalyticBackend(cfg or CostConfig())
    base = backend.cost(op).total
    for action in schedule.actions:
        op = apply_action(op, action, max_loops)
    final = backend.cost(op).total
    return op, base / final
