"""Fixed-size observation encoding of an operation plus its optimization history."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import LimitExceeded, StepOutOfRange
from .ir import LinalgOp
from .transforms import (Action, Im2col, Interchange, Parallelization, Tiling,
                         Vectorization)


@dataclass(frozen=True)
class EnvLimits:
    N: int = 7    # max loops
    M: int = 5    # tile-size choices per loop (entry 0 is "no tiling")
    D: int = 4    # max array dims
    tau: int = 7  # max schedule length
    L: int = 3    # max load matrices

    @property
    def obs_len(self) -> int:
        N, M, D, tau, L = self.N, self.M, self.D, self.tau, self.L
        return N + L * D * (N + 1) + D * (N + 1) + 6 + N * 3 * tau + 2


# history channels
H_TILING, H_PARALLEL, H_INTERCHANGE = range(3)


@dataclass
class HistoryTensor:
    """N x 3 x tau record of applied transformations plus two scalar flags."""

    entries: np.ndarray
    vectorized: bool = False
    im2col: bool = False

    @classmethod
    def empty(cls, limits: EnvLimits) -> "HistoryTensor":
        return cls(np.zeros((limits.N, 3, limits.tau), dtype=np.float64))

    def copy(self) -> "HistoryTensor":
        return HistoryTensor(self.entries.copy(), self.vectorized, self.im2col)


def record_history(history: HistoryTensor, action: Action, step: int,
                   n_loops: int) -> HistoryTensor:
    """Return a new history with ``action`` recorded at ``step``.

    ``n_loops`` is the loop count *before* the action was applied; tile sizes
    and swap indices refer to that loop order.
    """
    N, _, tau = history.entries.shape
    if not 0 <= step < tau:
        raise StepOutOfRange(f"step {step} outside [0, {tau})")
    out = history.copy()
    if isinstance(action, (Tiling, Parallelization)):
        ch = H_TILING if isinstance(action, Tiling) else H_PARALLEL
        for i, s in enumerate(action.sizes[:N]):
            out.entries[i, ch, step] = s
    elif isinstance(action, Interchange):
        k = action.swap_index
        if k < n_loops - 1:  # the last slot is the identity and writes nothing
            out.entries[k, H_INTERCHANGE, step] = k + 1
            out.entries[k + 1, H_INTERCHANGE, step] = k + 1
    elif isinstance(action, Vectorization):
        out.vectorized = True
    elif isinstance(action, Im2col):
        out.im2col = True
    return out


def extract(op: LinalgOp, history: Optional[HistoryTensor],
            limits: EnvLimits) -> np.ndarray:
    """Concatenated representation vector; see EnvLimits.obs_len for layout."""
    N, M, D, tau, L = limits.N, limits.M, limits.D, limits.tau, limits.L
    n = op.n
    if n > N:
        raise LimitExceeded(f"{n} loops > N={N}")
    if len(op.loads) > L:
        raise LimitExceeded(f"{len(op.loads)} loads > L={L}")
    for a in op.accesses():
        if a.ndim > D:
            raise LimitExceeded(f"access with {a.ndim} dims > D={D}")

    # 1) per-loop trip counts, log-scaled, padded to N
    seg_loops = np.zeros(N)
    for i, loop in enumerate(op.loops):
        seg_loops[i] = np.log1p(loop.trip)

    # 2-3) access matrices zero-padded; constant term goes in the last column
    def pad(mat) -> np.ndarray:
        out = np.zeros((D, N + 1))
        arr = mat.as_array()
        out[:arr.shape[0], :n] = arr[:, :n]
        out[:arr.shape[0], N] = arr[:, n]
        return out

    seg_loads = np.zeros((L, D, N + 1))
    for li, mat in enumerate(op.loads):
        seg_loads[li] = pad(mat)
    seg_store = pad(op.store)

    # 4) math-op counts
    seg_counts = np.array(op.counts.as_tuple(), dtype=np.float64)

    # 5) history, tile sizes log-scaled
    if history is None:
        history = HistoryTensor.empty(limits)
    hist = history.entries.copy()
    hist[:, :2, :] = np.log1p(hist[:, :2, :])

    # 6) flags
    flags = np.array([float(history.vectorized), float(history.im2col)])

    obs = np.concatenate([
        seg_loops, seg_loads.ravel(), seg_store.ravel(), seg_counts,
        hist.ravel(), flags,
    ])
    assert obs.shape[0] == limits.obs_len
    return obs
