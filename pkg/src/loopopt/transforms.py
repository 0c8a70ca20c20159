"""The five loop-nest transformations, their legality rules, and action masks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (AlreadyApplied, AlreadyParallelized, AlreadyVectorized,
                     IndexOutOfRange, LoopBudgetExceeded, LoopOptError,
                     MaskedAction, NotConvolution, NotDivisor)
from .ir import AccessMatrix, LinalgOp, LoopDim, OpKind, build_operation

# canonical pool of nonzero tile-size candidates
TILE_POOL = (2, 4, 8, 16, 32, 64, 128, 256)

# transform head ordering
TRANSFORM_NAMES = ("tiling", "parallelization", "interchange", "im2col", "vectorization")
T_TILING, T_PARALLEL, T_INTERCHANGE, T_IM2COL, T_VECTORIZE = range(5)


# --- actions --------------------------------------------------------------

@dataclass(frozen=True)
class Tiling:
    sizes: Tuple[int, ...]


@dataclass(frozen=True)
class Parallelization:
    sizes: Tuple[int, ...]


@dataclass(frozen=True)
class Interchange:
    swap_index: int


@dataclass(frozen=True)
class Im2col:
    pass


@dataclass(frozen=True)
class Vectorization:
    pass


Action = Union[Tiling, Parallelization, Interchange, Im2col, Vectorization]


def transform_index(action: Action) -> int:
    if isinstance(action, Tiling):
        return T_TILING
    if isinstance(action, Parallelization):
        return T_PARALLEL
    if isinstance(action, Interchange):
        return T_INTERCHANGE
    if isinstance(action, Im2col):
        return T_IM2COL
    return T_VECTORIZE


@dataclass(frozen=True)
class Schedule:
    actions: Tuple[Action, ...] = ()

    def appended(self, action: Action) -> "Schedule":
        return Schedule(self.actions + (action,))

    def __len__(self) -> int:
        return len(self.actions)

    def validate(self) -> None:
        n_par = sum(isinstance(a, Parallelization) for a in self.actions)
        if n_par > 1:
            raise AlreadyParallelized("more than one Parallelization in schedule")
        vec_at = [i for i, a in enumerate(self.actions) if isinstance(a, Vectorization)]
        if len(vec_at) > 1:
            raise AlreadyVectorized("more than one Vectorization in schedule")
        if vec_at and vec_at[0] != len(self.actions) - 1:
            raise AlreadyVectorized("Vectorization must be the last action")


# --- action <-> JSON ------------------------------------------------------

def action_to_dict(action: Action) -> dict:
    if isinstance(action, Tiling):
        return {"t": "Tiling", "sizes": list(action.sizes)}
    if isinstance(action, Parallelization):
        return {"t": "Parallelization", "sizes": list(action.sizes)}
    if isinstance(action, Interchange):
        return {"t": "Interchange", "k": action.swap_index}
    if isinstance(action, Im2col):
        return {"t": "Im2col"}
    return {"t": "Vectorization"}


def action_from_dict(d: dict) -> Action:
    t = d["t"]
    if t == "Tiling":
        return Tiling(tuple(int(s) for s in d["sizes"]))
    if t == "Parallelization":
        return Parallelization(tuple(int(s) for s in d["sizes"]))
    if t == "Interchange":
        return Interchange(int(d["k"]))
    if t == "Im2col":
        return Im2col()
    if t == "Vectorization":
        return Vectorization()
    raise LoopOptError(f"unknown action tag {t!r}")


def schedule_to_json(schedule: Schedule) -> str:
    return json.dumps({"actions": [action_to_dict(a) for a in schedule.actions]})


def schedule_from_json(s: str) -> Schedule:
    d = json.loads(s)
    return Schedule(tuple(action_from_dict(a) for a in d["actions"]))


# --- tile-size candidates -------------------------------------------------

def candidate_tile_sizes(loop: LoopDim, M: int) -> List[int]:
    """[0] plus up to M-1 pool divisors of the trip count, zero-padded to M."""
    trip = loop.trip
    divs = [d for d in TILE_POOL if trip % d == 0][:M - 1]
    out = [0] + divs
    out += [0] * (M - len(out))
    return out


def _budget_enabled(op: LinalgOp, N: int, M: int) -> List[bool]:
    """Loops allowed to take a nonzero tile size.

    Per-loop tile choices are sampled independently, so at most N - n loops
    may offer nonzero candidates or a joint sample could blow the loop
    budget.  Enable outermost-first among loops that have pool divisors.
    """
    budget = N - op.n
    enabled = [False] * op.n
    for i, loop in enumerate(op.loops):
        if budget <= 0:
            break
        if any(candidate_tile_sizes(loop, M)[1:]):
            enabled[i] = True
            budget -= 1
    return enabled


# --- transformations ------------------------------------------------------

def _split_access(mat: AccessMatrix, n: int, outer_idx: Sequence[int]) -> AccessMatrix:
    rows = []
    for r in mat.rows:
        rows.append([r[i] for i in outer_idx] + [r[i] for i in range(n)] + [r[n]])
    return AccessMatrix.make(rows)


def _tile(op: LinalgOp, sizes: Sequence[int], parallel: bool, max_loops: int) -> LinalgOp:
    n = op.n
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != n:
        raise NotDivisor(f"expected {n} tile sizes, got {len(sizes)}")
    for i, s in enumerate(sizes):
        if s < 0 or (s and op.loops[i].trip % s):
            raise NotDivisor(f"size {s} does not divide trip {op.loops[i].trip} of loop {i}")
    outer_idx = [i for i, s in enumerate(sizes) if s]
    if n + len(outer_idx) > max_loops:
        raise LoopBudgetExceeded(f"{n} loops + {len(outer_idx)} tiles > {max_loops}")
    if not outer_idx:
        return op

    outer_loops = []
    for i in outer_idx:
        l = op.loops[i]
        outer_loops.append(LoopDim(l.lower, l.upper, l.step * sizes[i],
                                   parallel=parallel or l.parallel))
    inner_loops = []
    for i, l in enumerate(op.loops):
        if sizes[i]:
            inner_loops.append(LoopDim(0, l.step * sizes[i], l.step,
                                       vectorized=l.vectorized))
        else:
            inner_loops.append(l)
    new_loops = tuple(outer_loops) + tuple(inner_loops)
    return replace(
        op,
        loops=new_loops,
        loads=tuple(_split_access(a, n, outer_idx) for a in op.loads),
        store=_split_access(op.store, n, outer_idx),
    )


def apply_tiling(op: LinalgOp, sizes: Sequence[int], max_loops: int = 7) -> LinalgOp:
    return _tile(op, sizes, parallel=False, max_loops=max_loops)


def apply_parallelization(op: LinalgOp, sizes: Sequence[int], max_loops: int = 7) -> LinalgOp:
    if op.parallel_applied:
        raise AlreadyParallelized("Parallelization already used on this operation")
    out = _tile(op, sizes, parallel=True, max_loops=max_loops)
    return replace(out, parallel_applied=True)


def apply_interchange(op: LinalgOp, swap_index: int) -> LinalgOp:
    n = op.n
    if not 0 <= swap_index <= n - 1:
        raise IndexOutOfRange(f"swap index {swap_index} outside [0, {n - 1}]")
    if swap_index == n - 1:  # identity slot
        return op
    k = swap_index

    def swap_cols(mat: AccessMatrix) -> AccessMatrix:
        rows = []
        for r in mat.rows:
            r = list(r)
            r[k], r[k + 1] = r[k + 1], r[k]
            rows.append(r)
        return AccessMatrix.make(rows)

    loops = list(op.loops)
    loops[k], loops[k + 1] = loops[k + 1], loops[k]
    return replace(op, loops=tuple(loops),
                   loads=tuple(swap_cols(a) for a in op.loads),
                   store=swap_cols(op.store))


def apply_im2col(op: LinalgOp) -> LinalgOp:
    if op.im2col_applied:
        raise AlreadyApplied("Im2col already applied")
    if op.kind is not OpKind.CONV2D:
        raise NotConvolution(f"cannot apply Im2col to {op.kind.value}")
    b, h, w, cin, cout, kh, kw = op.shape
    oh, ow = h - kh + 1, w - kw + 1
    gm, gn, gk = b * oh * ow, cout, kh * kw * cin
    out = build_operation(OpKind.MATMUL, (gm, gn, gk))
    # one-time data-reshaping surcharge: the packed input buffer, in elements
    return replace(out, im2col_applied=True, im2col_surcharge=gm * gk,
                   parallel_applied=op.parallel_applied,
                   elem_bytes=op.elem_bytes)


def apply_vectorization(op: LinalgOp) -> LinalgOp:
    if op.vectorized:
        raise AlreadyVectorized("Vectorization already applied")
    loops = list(op.loops)
    loops[-1] = replace(loops[-1], vectorized=True)
    return replace(op, loops=tuple(loops), vectorized=True)


def apply_action(op: LinalgOp, action: Action, max_loops: int = 7) -> LinalgOp:
    if isinstance(action, Tiling):
        return apply_tiling(op, action.sizes, max_loops)
    if isinstance(action, Parallelization):
        return apply_parallelization(op, action.sizes, max_loops)
    if isinstance(action, Interchange):
        return apply_interchange(op, action.swap_index)
    if isinstance(action, Im2col):
        return apply_im2col(op)
    if isinstance(action, Vectorization):
        return apply_vectorization(op)
    raise LoopOptError(f"unknown action {action!r}")


def run_actions(op: LinalgOp, schedule: Schedule, max_loops: int = 7) -> LinalgOp:
    for action in schedule.actions:
        op = apply_action(op, action, max_loops)
    return op


# --- action mask ----------------------------------------------------------

@dataclass
class ActionMask:
    transform: np.ndarray    # (5,) bool
    tile: np.ndarray         # (N, M+1) bool; column M is a padding slot
    interchange: np.ndarray  # (N,) bool


def compute_mask(op: LinalgOp, history: Schedule, step: int, limits) -> ActionMask:
    """Feasibility mask for the current state.

    ``limits`` carries N (max loops), M (tile choices) and tau (max schedule
    length).  At the last step only Vectorization remains legal.
    """
    N, M, tau = limits.N, limits.M, limits.tau
    n = op.n
    transform = np.zeros(5, dtype=bool)
    tile = np.zeros((N, M + 1), dtype=bool)
    inter = np.zeros(N, dtype=bool)

    enabled = _budget_enabled(op, N, M)
    any_tileable = False
    for i in range(min(n, N)):
        cands = candidate_tile_sizes(op.loops[i], M)
        tile[i, 0] = True
        if enabled[i]:
            for j in range(1, M):
                if cands[j]:
                    tile[i, j] = True
                    any_tileable = True
    for i in range(n, N):
        tile[i, 0] = True

    inter[:n] = True

    if step >= tau - 1:
        transform[T_VECTORIZE] = True
        return ActionMask(transform, tile, inter)

    par_used = op.parallel_applied or any(
        isinstance(a, Parallelization) for a in history.actions)
    transform[T_TILING] = any_tileable
    transform[T_PARALLEL] = not par_used
    transform[T_INTERCHANGE] = n >= 2
    transform[T_IM2COL] = op.kind is OpKind.CONV2D and not op.im2col_applied
    transform[T_VECTORIZE] = True
    return ActionMask(transform, tile, inter)


def mask_permits(op: LinalgOp, mask: ActionMask, action: Action, limits) -> bool:
    idx = transform_index(action)
    if not mask.transform[idx]:
        return False
    if isinstance(action, (Tiling, Parallelization)):
        if len(action.sizes) != op.n:
            return False
        nnz = sum(1 for s in action.sizes if s)
        if op.n + nnz > limits.N:
            return False
        for i, s in enumerate(action.sizes):
            if s and op.loops[i].trip % s:
                return False
        return True
    if isinstance(action, Interchange):
        k = action.swap_index
        return 0 <= k < op.n and bool(mask.interchange[k])
    return True


def build_action(op: LinalgOp, limits, transform_idx: int,
                 tile_idx: Optional[Sequence[int]] = None,
                 swap_index: Optional[int] = None) -> Action:
    """Map sampled head indices to a concrete Action for the current op."""
    if transform_idx in (T_TILING, T_PARALLEL):
        sizes = []
        for i in range(op.n):
            j = int(tile_idx[i])
            cands = candidate_tile_sizes(op.loops[i], limits.M)
            sizes.append(cands[j] if j < limits.M else 0)
        cls = Tiling if transform_idx == T_TILING else Parallelization
        return cls(tuple(sizes))
    if transform_idx == T_INTERCHANGE:
        return Interchange(int(swap_index))
    if transform_idx == T_IM2COL:
        return Im2col()
    return Vectorization()


def sample_random_action(op: LinalgOp, mask: ActionMask, limits,
                         rng: np.random.Generator) -> Action:
    """Uniform masked action sample (random-policy baseline and tests)."""
    legal = np.flatnonzero(mask.transform)
    t = int(rng.choice(legal))
    if t in (T_TILING, T_PARALLEL):
        tile_idx = []
        for i in range(op.n):
            choices = np.flatnonzero(mask.tile[i])
            tile_idx.append(int(rng.choice(choices)))
        return build_action(op, limits, t, tile_idx=tile_idx)
    if t == T_INTERCHANGE:
        choices = np.flatnonzero(mask.interchange[:op.n])
        return build_action(op, limits, t, swap_index=int(rng.choice(choices)))
    return build_action(op, limits, t)


def action_space_size(N: int, M: int) -> int:
    if N < 1 or M < 1:
        raise LoopOptError(f"N and M must be >= 1, got N={N}, M={M}")
    return 2 * M ** N + math.factorial(N) + 2
