"""Execution-cost backends.

Two routes: a deterministic analytic cache-aware cost model (default for
training and evaluation), and a reference interpreter that executes the loop
nest on concrete buffers, used as the semantic-equivalence oracle and for
optional wall-clock measurement.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ExtentMismatch, SafetyLimitExceeded
from .ir import AccessMatrix, LinalgOp, OpKind, trip_count


@dataclass(frozen=True)
class CostConfig:
    cache_bytes: int = 32768
    line_bytes: int = 64
    cores: int = 8
    vec_width: int = 8
    miss_penalty: float = 8.0
    flop_cost: float = 1.0
    im2col_write_cost: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "CostConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "cache_bytes": self.cache_bytes, "line_bytes": self.line_bytes,
            "cores": self.cores, "vec_width": self.vec_width,
            "miss_penalty": self.miss_penalty, "flop_cost": self.flop_cost,
            "im2col_write_cost": self.im2col_write_cost,
        }


@dataclass
class CostReport:
    total: float
    compute_term: float
    memory_term: float
    timed_out: bool = False


# --- analytic model -------------------------------------------------------

def _vector_eligible(op: LinalgOp) -> bool:
    """Innermost accesses must be (near-)contiguous: |coeff| <= 1 in the last column."""
    col = op.n - 1
    for mat in op.accesses():
        for row in mat.rows:
            if abs(row[col]) > 1:
                return False
    return True


def _band_footprint_bytes(op: LinalgOp, k: int) -> float:
    """Combined data footprint of all accesses when loops [k:] vary."""
    total = 0.0
    for mat in op.accesses():
        elems = 1.0
        for row in mat.rows:
            span = 0
            for j in range(k, op.n):
                loop = op.loops[j]
                span += abs(row[j]) * (loop.upper - loop.lower - loop.step)
            elems *= 1 + span
        total += elems * op.elem_bytes
    return total


def analytic_cost(op: LinalgOp, cfg: CostConfig) -> CostReport:
    trips = [loop.trip for loop in op.loops]
    total_trip = math.prod(trips)

    par_trip = math.prod(l.trip for l in op.loops if l.parallel)
    par_factor = min(cfg.cores, par_trip) if par_trip > 1 else 1
    vec_factor = cfg.vec_width if (op.vectorized and _vector_eligible(op)) else 1
    compute = total_trip * op.counts.total * cfg.flop_cost / (par_factor * vec_factor)

    # footprint rule: walk outermost -> innermost until the remaining inner
    # band fits in cache; inner reuse is then free
    misses = 0.0
    outer = 1.0
    for k in range(op.n + 1):
        fp = _band_footprint_bytes(op, k)
        if fp <= cfg.cache_bytes or k == op.n:
            misses = outer * (fp / cfg.line_bytes)
            break
        outer *= trips[k]
    memory = misses * cfg.miss_penalty + op.im2col_surcharge * cfg.im2col_write_cost
    return CostReport(total=compute + memory, compute_term=compute, memory_term=memory)


# --- reference interpreter ------------------------------------------------

def access_extents(mat: AccessMatrix, op: LinalgOp) -> Tuple[int, ...]:
    """Minimal buffer shape covering every subscript the access can produce."""
    ext = []
    for row in mat.rows:
        hi = row[op.n]
        for j in range(op.n):
            loop = op.loops[j]
            hi += max(0, row[j]) * (loop.upper - loop.lower - loop.step)
        ext.append(hi + 1)
    return tuple(ext)


def input_shapes(op: LinalgOp) -> List[Tuple[int, ...]]:
    return [access_extents(a, op) for a in op.loads]


def output_shape(op: LinalgOp) -> Tuple[int, ...]:
    return access_extents(op.store, op)


def _iteration_values(op: LinalgOp, safety_limit: int, max_total: int) -> np.ndarray:
    vals = []
    total = 1
    for loop in op.loops:
        if loop.trip > safety_limit:
            raise SafetyLimitExceeded(f"trip {loop.trip} > limit {safety_limit}")
        total *= loop.trip
        vals.append(np.arange(loop.lower, loop.upper, loop.step, dtype=np.int64))
    if total > max_total:
        raise SafetyLimitExceeded(f"{total} iterations > limit {max_total}")
    grid = np.meshgrid(*vals, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)  # (T, n)


def _flat_subscripts(mat: AccessMatrix, iters: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    arr = mat.as_array()
    idx = iters @ arr[:, :-1].T + arr[:, -1]
    if (idx < 0).any() or (idx >= np.array(shape)).any():
        raise ExtentMismatch(f"subscripts exceed buffer shape {shape}")
    return np.ravel_multi_index(tuple(idx.T), shape)


def interpret(op: LinalgOp, inputs: Sequence[np.ndarray],
              safety_limit: int = 64, max_total: int = 1 << 22) -> np.ndarray:
    """Sequential reference execution; parallel/vectorized flags are ignored."""
    if len(inputs) != len(op.loads):
        raise ExtentMismatch(f"expected {len(op.loads)} inputs, got {len(inputs)}")
    for buf, mat in zip(inputs, op.loads):
        need = access_extents(mat, op)
        if buf.ndim != len(need) or any(b < e for b, e in zip(buf.shape, need)):
            raise ExtentMismatch(f"buffer {buf.shape} smaller than extents {need}")

    iters = _iteration_values(op, safety_limit, max_total)
    loaded = [buf.ravel()[_flat_subscripts(mat, iters, buf.shape)]
              for buf, mat in zip(inputs, op.loads)]
    out_shape = output_shape(op)
    istore = _flat_subscripts(op.store, iters, out_shape)

    if op.kind in (OpKind.MATMUL, OpKind.CONV2D):
        out = np.zeros(math.prod(out_shape), dtype=np.result_type(*[b.dtype for b in inputs], np.float64))
        np.add.at(out, istore, loaded[0] * loaded[1])
    elif op.kind is OpKind.MAXPOOL:
        out = np.full(math.prod(out_shape), -np.inf)
        np.maximum.at(out, istore, loaded[0].astype(np.float64))
    elif op.kind is OpKind.ADD:
        out = np.zeros(math.prod(out_shape), dtype=np.float64)
        out[istore] = loaded[0] + loaded[1]
    elif op.kind is OpKind.RELU:
        out = np.zeros(math.prod(out_shape), dtype=np.float64)
        out[istore] = np.maximum(loaded[0], 0)
    else:  # pragma: no cover
        raise ExtentMismatch(f"unknown kind {op.kind}")
    return out.reshape(out_shape)


def random_inputs(op: LinalgOp, rng: np.random.Generator,
                  integer: bool = False) -> List[np.ndarray]:
    shapes = input_shapes(op)
    if integer:
        return [rng.integers(-4, 5, size=s).astype(np.int64) for s in shapes]
    return [rng.standard_normal(s) for s in shapes]


def im2col_pack(conv_shape: Sequence[int], image: np.ndarray,
                weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Build the GEMM operands equivalent to a conv2d with the given inputs.

    Returns (A, B) with A of shape (B*OH*OW, Kh*Kw*Cin) holding the packed
    input patches and B of shape (Kh*Kw*Cin, Cout) the reshaped weights.
    """
    b, h, w, cin, cout, kh, kw = conv_shape
    oh, ow = h - kh + 1, w - kw + 1
    a = np.empty((b * oh * ow, kh * kw * cin), dtype=image.dtype)
    row = 0
    for bi in range(b):
        for y in range(oh):
            for x in range(ow):
                a[row] = image[bi, y:y + kh, x:x + kw, :cin].ravel()
                row += 1
    return a, weights[:kh, :kw, :cin, :cout].reshape(kh * kw * cin, cout)


# --- wall-clock measurement -----------------------------------------------

def measure(op: LinalgOp, repeats: int = 3, timeout_factor: float = 10.0,
            base_time: float = math.inf, inputs: Optional[Sequence[np.ndarray]] = None,
            safety_limit: int = 64) -> CostReport:
    """Median wall-clock of interpreter runs, with the adaptive timeout rule."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if inputs is None:
        inputs = random_inputs(op, np.random.default_rng(0))
    times = []
    limit = timeout_factor * base_time
    for _ in range(repeats):
        t0 = time.perf_counter()
        interpret(op, inputs, safety_limit=safety_limit)
        dt = time.perf_counter() - t0
        if dt > limit:
            return CostReport(total=math.nan, compute_term=math.nan,
                              memory_term=0.0, timed_out=True)
        times.append(dt)
    med = float(np.median(times))
    return CostReport(total=med, compute_term=med, memory_term=0.0)


# --- backend objects ------------------------------------------------------

class AnalyticBackend:
    """Deterministic cost model; the default for training and evaluation."""

    name = "analytic"

    def __init__(self, cfg: Optional[CostConfig] = None):
        self.cfg = cfg or CostConfig()

    def cost(self, op: LinalgOp, base_time: Optional[float] = None) -> CostReport:
        return analytic_cost(op, self.cfg)


class MeasuredBackend:
    """Wall-clock interpreter timing behind the same interface.

    Not reentrant: timing runs must not overlap on one instance.
    """

    name = "measured"

    def __init__(self, cfg: Optional[CostConfig] = None, repeats: int = 3,
                 timeout_factor: float = 10.0, safety_limit: int = 64):
        self.cfg = cfg or CostConfig()
        self.repeats = repeats
        self.timeout_factor = timeout_factor
        self.safety_limit = safety_limit

    def cost(self, op: LinalgOp, base_time: Optional[float] = None) -> CostReport:
        return measure(op, repeats=self.repeats,
                       timeout_factor=self.timeout_factor,
                       base_time=math.inf if base_time is None else base_time,
                       safety_limit=self.safety_limit)
