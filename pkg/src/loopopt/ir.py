"""Loop-nest intermediate representation for the five benchmark op kinds.

Operations are perfect loop nests with affine array accesses.  Each access is
an integer matrix with one row per array dimension and one column per loop
iterator plus a trailing constant column.  Array subscripts are linear
combinations of the iterator *values* (not iteration indices), which lets
tiled loops keep the original coefficients: a loop split into an outer loop
stepping by the tile size and an inner point loop satisfies
``original_iter = outer + inner``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeArity, TooManyLoops

MAX_LOOPS = 7


class OpKind(str, Enum):
    MATMUL = "matmul"
    CONV2D = "conv2d"
    MAXPOOL = "maxpool"
    ADD = "add"
    RELU = "relu"


@dataclass(frozen=True)
class LoopDim:
    lower: int
    upper: int
    step: int = 1
    parallel: bool = False
    vectorized: bool = False

    def __post_init__(self):
        if self.step < 1 or self.upper <= self.lower:
            raise ShapeArity(f"invalid loop bounds ({self.lower}, {self.upper}, {self.step})")

    @property
    def trip(self) -> int:
        return -((self.lower - self.upper) // self.step)


@dataclass(frozen=True)
class AccessMatrix:
    """D_a rows x (n+1) columns; last column holds the constant term."""

    rows: Tuple[Tuple[int, ...], ...]

    @classmethod
    def make(cls, rows: Sequence[Sequence[int]]) -> "AccessMatrix":
        return cls(tuple(tuple(int(v) for v in r) for r in rows))

    @property
    def ndim(self) -> int:
        return len(self.rows)

    @property
    def ncols(self) -> int:
        return len(self.rows[0])

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.int64)


@dataclass(frozen=True)
class MathOpCounts:
    add: int = 0
    sub: int = 0
    mul: int = 0
    div: int = 0
    exp: int = 0
    log: int = 0

    def as_tuple(self) -> Tuple[int, ...]:
        return (self.add, self.sub, self.mul, self.div, self.exp, self.log)

    @property
    def total(self) -> int:
        return sum(self.as_tuple())


@dataclass(frozen=True)
class LinalgOp:
    kind: OpKind
    loops: Tuple[LoopDim, ...]
    loads: Tuple[AccessMatrix, ...]
    store: AccessMatrix
    counts: MathOpCounts
    shape: Tuple[int, ...]
    elem_bytes: int = 4
    parallel_applied: bool = False
    vectorized: bool = False
    im2col_applied: bool = False
    im2col_surcharge: int = 0

    @property
    def n(self) -> int:
        return len(self.loops)

    def accesses(self) -> Tuple[AccessMatrix, ...]:
        return self.loads + (self.store,)


def trip_count(op: LinalgOp) -> int:
    return math.prod(loop.trip for loop in op.loops)


def _identity_access(ndims: int) -> AccessMatrix:
    rows = []
    for d in range(ndims):
        row = [0] * (ndims + 1)
        row[d] = 1
        rows.append(row)
    return AccessMatrix.make(rows)


def _row(n: int, coeffs: Mapping[int, int], const: int = 0) -> List[int]:
    row = [0] * (n + 1)
    for j, c in coeffs.items():
        row[j] = c
    row[n] = const
    return row


def build_operation(kind: OpKind, shape: Sequence[int], max_loops: int = MAX_LOOPS) -> LinalgOp:
    """Materialize the textbook loop nest for ``kind`` at the given shape."""
    kind = OpKind(kind)
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ShapeArity(f"shape entries must be >= 1, got {shape}")

    if kind is OpKind.MATMUL:
        if len(shape) != 3:
            raise ShapeArity(f"matmul expects [M, N, K], got {shape}")
        m, n_, k = shape
        loops = tuple(LoopDim(0, u) for u in (m, n_, k))
        loads = (
            AccessMatrix.make([_row(3, {0: 1}), _row(3, {2: 1})]),  # A[i, k]
            AccessMatrix.make([_row(3, {2: 1}), _row(3, {1: 1})]),  # B[k, j]
        )
        store = AccessMatrix.make([_row(3, {0: 1}), _row(3, {1: 1})])  # C[i, j]
        counts = MathOpCounts(add=1, mul=1)

    elif kind is OpKind.CONV2D:
        if len(shape) != 7:
            raise ShapeArity(f"conv2d expects [B, H, W, Cin, Cout, Kh, Kw], got {shape}")
        b, h, w, cin, cout, kh, kw = shape
        if h < kh or w < kw:
            raise ShapeArity(f"spatial dims smaller than kernel in {shape}")
        oh, ow = h - kh + 1, w - kw + 1
        # loop order: b, oh, ow, co, kh, kw, ci
        loops = tuple(LoopDim(0, u) for u in (b, oh, ow, cout, kh, kw, cin))
        loads = (
            AccessMatrix.make([  # input[b, oh+kh, ow+kw, ci] (NHWC)
                _row(7, {0: 1}),
                _row(7, {1: 1, 4: 1}),
                _row(7, {2: 1, 5: 1}),
                _row(7, {6: 1}),
            ]),
            AccessMatrix.make([  # weights[kh, kw, ci, co]
                _row(7, {4: 1}),
                _row(7, {5: 1}),
                _row(7, {6: 1}),
                _row(7, {3: 1}),
            ]),
        )
        store = AccessMatrix.make([
            _row(7, {0: 1}), _row(7, {1: 1}), _row(7, {2: 1}), _row(7, {3: 1}),
        ])
        counts = MathOpCounts(add=1, mul=1)

    elif kind is OpKind.MAXPOOL:
        if len(shape) != 6:
            raise ShapeArity(f"maxpool expects [B, H, W, C, Kh, Kw], got {shape}")
        b, h, w, c, kh, kw = shape
        if h < kh or w < kw:
            raise ShapeArity(f"spatial dims smaller than kernel in {shape}")
        oh, ow = h - kh + 1, w - kw + 1
        # loop order: b, oh, ow, c, kh, kw
        loops = tuple(LoopDim(0, u) for u in (b, oh, ow, c, kh, kw))
        loads = (
            AccessMatrix.make([
                _row(6, {0: 1}),
                _row(6, {1: 1, 4: 1}),
                _row(6, {2: 1, 5: 1}),
                _row(6, {3: 1}),
            ]),
        )
        store = AccessMatrix.make([
            _row(6, {0: 1}), _row(6, {1: 1}), _row(6, {2: 1}), _row(6, {3: 1}),
        ])
        # max-with-running-value modeled as one cheap ALU op in the add slot
        counts = MathOpCounts(add=1)

    elif kind in (OpKind.ADD, OpKind.RELU):
        if not 1 <= len(shape) <= 4:
            raise ShapeArity(f"{kind.value} expects 1-4 dims, got {shape}")
        nd = len(shape)
        loops = tuple(LoopDim(0, u) for u in shape)
        ident = _identity_access(nd)
        loads = (ident, ident) if kind is OpKind.ADD else (ident,)
        store = ident
        counts = MathOpCounts(add=1)

    else:  # pragma: no cover
        raise ShapeArity(f"unknown kind {kind}")

    if len(loops) > max_loops:
        raise TooManyLoops(f"{kind.value} shape {shape} needs {len(loops)} loops > {max_loops}")
    return LinalgOp(kind=kind, loops=loops, loads=loads, store=store,
                    counts=counts, shape=shape)


# --- dataset generation ---------------------------------------------------

DEFAULT_TRAIN_COUNTS: Dict[OpKind, int] = {
    OpKind.MATMUL: 175,
    OpKind.CONV2D: 232,
    OpKind.MAXPOOL: 200,
    OpKind.ADD: 248,
    OpKind.RELU: 233,
}
DEFAULT_VAL_COUNTS: Dict[OpKind, int] = {
    OpKind.MATMUL: 15,
    OpKind.CONV2D: 18,
    OpKind.MAXPOOL: 10,
    OpKind.ADD: 10,
    OpKind.RELU: 14,
}

# Size-like dims are rounded to multiples of 4 so every generated loop has at
# least the divisors {2, 4}; batch and kernel dims are structural and exempt.
DEFAULT_SHAPE_RANGES: Dict[OpKind, Dict[str, Tuple[int, int]]] = {
    OpKind.MATMUL: {"dim": (8, 128)},
    OpKind.CONV2D: {"batch": (1, 4), "spatial": (8, 32), "channel": (4, 32), "kernel": (2, 3)},
    OpKind.MAXPOOL: {"batch": (1, 4), "spatial": (8, 64), "channel": (4, 64), "kernel": (2, 3)},
    OpKind.ADD: {"dim": (8, 128), "rank": (1, 3)},
    OpKind.RELU: {"dim": (8, 128), "rank": (1, 3)},
}

_KIND_ORDER = (OpKind.MATMUL, OpKind.CONV2D, OpKind.MAXPOOL, OpKind.ADD, OpKind.RELU)


def _round4(x: int) -> int:
    return max(4, int(round(x / 4)) * 4)


def _draw(rng: np.random.Generator, lo_hi: Tuple[int, int]) -> int:
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def _random_shape(kind: OpKind, rng: np.random.Generator,
                  ranges: Mapping[str, Tuple[int, int]]) -> Tuple[int, ...]:
    if kind is OpKind.MATMUL:
        return tuple(_round4(_draw(rng, ranges["dim"])) for _ in range(3))
    if kind is OpKind.CONV2D:
        b = _draw(rng, ranges["batch"])
        h = _round4(_draw(rng, ranges["spatial"]))
        w = _round4(_draw(rng, ranges["spatial"]))
        cin = _round4(_draw(rng, ranges["channel"]))
        cout = _round4(_draw(rng, ranges["channel"]))
        kh = _draw(rng, ranges["kernel"])
        kw = _draw(rng, ranges["kernel"])
        return (b, max(h, kh + 1), max(w, kw + 1), cin, cout, kh, kw)
    if kind is OpKind.MAXPOOL:
        b = _draw(rng, ranges["batch"])
        h = _round4(_draw(rng, ranges["spatial"]))
        w = _round4(_draw(rng, ranges["spatial"]))
        c = _round4(_draw(rng, ranges["channel"]))
        kh = _draw(rng, ranges["kernel"])
        kw = _draw(rng, ranges["kernel"])
        return (b, max(h, kh + 1), max(w, kw + 1), c, kh, kw)
    # add / relu
    rank = _draw(rng, ranges["rank"])
    return tuple(_round4(_draw(rng, ranges["dim"])) for _ in range(rank))


def generate_dataset(seed: int,
                     counts: Optional[Mapping[OpKind, int]] = None,
                     shape_ranges: Optional[Mapping[OpKind, Mapping[str, Tuple[int, int]]]] = None,
                     ) -> List[LinalgOp]:
    """Deterministically generate a dataset with the given per-kind counts."""
    counts = dict(DEFAULT_TRAIN_COUNTS if counts is None else counts)
    rng = np.random.default_rng(seed)
    ops: List[LinalgOp] = []
    for kind in _KIND_ORDER:
        ranges = dict(DEFAULT_SHAPE_RANGES[kind])
        if shape_ranges and kind in shape_ranges:
            ranges.update(shape_ranges[kind])
        for _ in range(int(counts.get(kind, 0))):
            ops.append(build_operation(kind, _random_shape(kind, rng, ranges)))
    return ops


# --- JSON serialization ---------------------------------------------------

def op_to_dict(op: LinalgOp) -> dict:
    d = {
        "kind": op.kind.value,
        "shape": list(op.shape),
        "loops": [{"lower": l.lower, "upper": l.upper, "step": l.step} for l in op.loops],
        "loads": [[list(r) for r in a.rows] for a in op.loads],
        "store": [list(r) for r in op.store.rows],
        "counts": list(op.counts.as_tuple()),
    }
    # transform-state extras, only present when non-default so untransformed
    # dataset files keep the exact documented schema
    flags = {}
    for i, l in enumerate(op.loops):
        if l.parallel or l.vectorized:
            flags[str(i)] = {"parallel": l.parallel, "vectorized": l.vectorized}
    if flags:
        d["loop_flags"] = flags
    if op.parallel_applied:
        d["parallel_applied"] = True
    if op.vectorized:
        d["vectorized"] = True
    if op.im2col_applied:
        d["im2col_applied"] = True
        d["im2col_surcharge"] = op.im2col_surcharge
    if op.elem_bytes != 4:
        d["elem_bytes"] = op.elem_bytes
    return d


def op_from_dict(d: Mapping) -> LinalgOp:
    flags = d.get("loop_flags", {})
    loops = []
    for i, l in enumerate(d["loops"]):
        f = flags.get(str(i), {})
        loops.append(LoopDim(l["lower"], l["upper"], l["step"],
                             parallel=f.get("parallel", False),
                             vectorized=f.get("vectorized", False)))
    counts = MathOpCounts(*d["counts"])
    return LinalgOp(
        kind=OpKind(d["kind"]),
        loops=tuple(loops),
        loads=tuple(AccessMatrix.make(a) for a in d["loads"]),
        store=AccessMatrix.make(d["store"]),
        counts=counts,
        shape=tuple(d["shape"]),
        elem_bytes=d.get("elem_bytes", 4),
        parallel_applied=d.get("parallel_applied", False),
        vectorized=d.get("vectorized", False),
        im2col_applied=d.get("im2col_applied", False),
        im2col_surcharge=d.get("im2col_surcharge", 0),
    )


def op_to_json(op: LinalgOp) -> str:
    return json.dumps(op_to_dict(op), separators=(",", ":"))


def op_from_json(s: str) -> LinalgOp:
    return op_from_dict(json.loads(s))


def save_dataset(path, ops: Sequence[LinalgOp]) -> None:
    with open(path, "w") as f:
        for op in ops:
            f.write(op_to_json(op) + "\n")


def load_dataset(path) -> List[LinalgOp]:
    ops = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                ops.append(op_from_json(line))
    return ops
