"""Exhaustive baseline scheduler.

Enumerates a constrained family of schedules (optional im2col, optional
interchange, at most one tiling or parallelization, optional trailing
vectorization), evaluates each through the cost backend, and keeps the best.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

from .cost import AnalyticBackend, CostConfig
from .errors import LoopOptError
from .ir import LinalgOp, OpKind
from .transforms import (Action, Im2col, Interchange, Parallelization,
                         Schedule, TILE_POOL, Tiling, Vectorization,
                         run_actions)


@dataclass(frozen=True)
class SearchConstraints:
    max_tile: int = 64
    min_tiled_loops: int = 2
    max_schedule_len: int = 7
    loop_budget: int = 7

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConstraints":
        return cls(**d)


@dataclass
class TraceEntry:
    index: int
    schedule: Schedule
    cost: float
    speedup: float
    best_so_far: float
    error: Optional[str] = None


@dataclass
class SearchTrace:
    entries: List[TraceEntry] = field(default_factory=list)
    skipped: int = 0


def _tile_vectors(op: LinalgOp, cons: SearchConstraints) -> Iterator[Tuple[int, ...]]:
    """Size vectors over pool divisors, bounded by the loop budget."""
    n = op.n
    budget = cons.loop_budget - n
    if budget < cons.min_tiled_loops:
        return
    per_loop = []
    for loop in op.loops:
        per_loop.append([0] + [d for d in TILE_POOL
                               if d <= cons.max_tile and loop.trip % d == 0])
    for combo in itertools.product(*per_loop):
        nnz = sum(1 for s in combo if s)
        if cons.min_tiled_loops <= nnz <= budget:
            yield combo


def enumerate_schedules(op: LinalgOp, cons: Optional[SearchConstraints] = None
                        ) -> Iterator[Schedule]:
    """Deterministic enumeration; the empty schedule always comes first."""
    cons = cons or SearchConstraints()
    head_choices: List[Tuple[Action, ...]] = [()]
    if op.kind is OpKind.CONV2D and not op.im2col_applied:
        head_choices.append((Im2col(),))

    for head in head_choices:
        base = run_actions(op, Schedule(head), cons.loop_budget)
        inter_choices: List[Tuple[Action, ...]] = [()]
        inter_choices += [(Interchange(k),) for k in range(base.n - 1)]
        for inter in inter_choices:
            mid = run_actions(base, Schedule(inter), cons.loop_budget)
            band_choices: List[Tuple[Action, ...]] = [()]
            for sizes in _tile_vectors(mid, cons):
                band_choices.append((Tiling(sizes),))
                band_choices.append((Parallelization(sizes),))
            for band in band_choices:
                for tail in ((), (Vectorization(),)):
                    actions = head + inter + band + tail
                    if 0 < len(actions) <= cons.max_schedule_len:
                        yield Schedule(actions)


def search(op: LinalgOp, cons: Optional[SearchConstraints] = None,
           cfg: Optional[CostConfig] = None, backend=None
           ) -> Tuple[Schedule, float, SearchTrace]:
    """Best schedule by exhaustive evaluation; ties keep the earliest."""
    cons = cons or SearchConstraints()
    backend = backend or AnalyticBackend(cfg or CostConfig())
    base_cost = backend.cost(op).total

    best_schedule = Schedule()
    best_cost = base_cost
    trace = SearchTrace()
    trace.entries.append(TraceEntry(0, Schedule(), base_cost, 1.0, 1.0))

    for idx, schedule in enumerate(enumerate_schedules(op, cons), start=1):
        try:
            final = run_actions(op, schedule, cons.loop_budget)
            report = backend.cost(final, base_time=base_cost)
            if report.timed_out:
                raise LoopOptError("timed out")
            cost = report.total
        except LoopOptError as exc:
            trace.skipped += 1
            trace.entries.append(TraceEntry(idx, schedule, float("nan"),
                                            float("nan"),
                                            base_cost / best_cost,
                                            error=type(exc).__name__))
            continue
        if cost < best_cost:
            best_cost = cost
            best_schedule = schedule
        trace.entries.append(TraceEntry(idx, schedule, cost, base_cost / cost,
                                        base_cost / best_cost))
    return best_schedule, base_cost / best_cost, trace
