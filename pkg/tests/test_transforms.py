import json

import numpy as np
import pytest

from loopopt.errors import (AlreadyApplied, AlreadyParallelized,
                            AlreadyVectorized, IndexOutOfRange,
                            LoopBudgetExceeded, NotConvolution, NotDivisor)
from loopopt.features import EnvLimits
from loopopt.ir import OpKind, build_operation
from loopopt.transforms import (Im2col, Interchange, Parallelization, Schedule,
                                Tiling, Vectorization, action_space_size,
                                apply_im2col, apply_interchange,
                                apply_parallelization, apply_tiling,
                                apply_vectorization, build_action,
                                candidate_tile_sizes, compute_mask,
                                mask_permits, run_actions,
                                sample_random_action, schedule_from_json,
                                schedule_to_json)

from conftest import small_random_op


def test_tiling_band_layout():
    op = build_operation("matmul", (4, 4, 4))
    out = apply_tiling(op, (2, 2, 0))
    # outer tile loops first, then the point band: (i_o, j_o, i_i, j_i, k)
    assert [(l.lower, l.upper, l.step) for l in out.loops] == [
        (0, 4, 2), (0, 4, 2), (0, 2, 1), (0, 2, 1), (0, 4, 1)]
    # A[i, k]: i = i_o + i_i, so both columns carry the original coefficient
    assert out.loads[0].rows[0] == (1, 0, 1, 0, 0, 0)
    assert out.loads[0].rows[1] == (0, 0, 0, 0, 1, 0)


def test_tiling_subscript_ranges_preserved():
    """Tiled and original nests enumerate the same subscript multiset."""
    op = build_operation("matmul", (4, 6, 8))
    out = apply_tiling(op, (2, 3, 4))

    def subscripts(o, mat):
        import itertools
        vals = [range(l.lower, l.upper, l.step) for l in o.loops]
        arr = mat.as_array()
        subs = []
        for point in itertools.product(*vals):
            vec = np.array(point + (1,))
            subs.append(tuple(arr @ vec))
        return sorted(subs)

    for a, b in zip(op.accesses(), out.accesses()):
        assert subscripts(op, a) == subscripts(out, b)


def test_tiling_zero_sizes_noop_and_errors():
    op = build_operation("matmul", (4, 4, 4))
    assert apply_tiling(op, (0, 0, 0)) == op
    with pytest.raises(NotDivisor):
        apply_tiling(op, (3, 0, 0))
    with pytest.raises(NotDivisor):
        apply_tiling(op, (2, 2))
    conv = build_operation("conv2d", (2, 8, 8, 4, 8, 3, 3))
    with pytest.raises(LoopBudgetExceeded):
        apply_tiling(conv, (2, 2, 2, 2, 0, 0, 2))


def test_retiling_a_tiled_loop():
    op = build_operation("matmul", (16, 16, 16))
    once = apply_tiling(op, (8, 0, 0))     # loops: i_o(step 8), i_i, j, k
    twice = apply_tiling(once, (0, 2, 0, 0))
    # the new tile loop i_i_o joins the outer band ahead of the point band
    assert [(l.lower, l.upper, l.step) for l in twice.loops] == [
        (0, 8, 2), (0, 16, 8), (0, 2, 1), (0, 16, 1), (0, 16, 1)]


def test_parallelization_once_only():
    op = build_operation("matmul", (8, 8, 8))
    par = apply_parallelization(op, (2, 2, 0))
    assert par.parallel_applied
    assert par.loops[0].parallel and par.loops[1].parallel
    assert not par.loops[2].parallel
    with pytest.raises(AlreadyParallelized):
        apply_parallelization(par, (0, 0, 0))
    # all-zero sizes still consume the once-per-schedule budget
    zero = apply_parallelization(op, (0, 0, 0))
    assert zero.parallel_applied and zero.loops == op.loops


def test_interchange_swap_and_identity():
    op = build_operation("matmul", (4, 6, 8))
    out = apply_interchange(op, 1)  # swap j and k
    assert [l.trip for l in out.loops] == [4, 8, 6]
    assert out.loads[0].rows[1] == (0, 1, 0, 0)  # A's k row follows its loop
    assert apply_interchange(op, op.n - 1) == op
    with pytest.raises(IndexOutOfRange):
        apply_interchange(op, 3)


def test_im2col():
    conv = build_operation("conv2d", (2, 8, 8, 4, 8, 3, 3))
    gem = apply_im2col(conv)
    assert gem.kind is OpKind.MATMUL
    assert gem.shape == (2 * 6 * 6, 8, 3 * 3 * 4)
    assert gem.im2col_applied
    assert gem.im2col_surcharge == 72 * 36
    with pytest.raises(AlreadyApplied):
        apply_im2col(gem)
    with pytest.raises(NotConvolution):
        apply_im2col(build_operation("matmul", (4, 4, 4)))


def test_vectorization():
    op = build_operation("matmul", (4, 4, 4))
    v = apply_vectorization(op)
    assert v.vectorized and v.loops[-1].vectorized
    with pytest.raises(AlreadyVectorized):
        apply_vectorization(v)


def test_schedule_json_roundtrip():
    sched = Schedule((Tiling((2, 2, 0)), Interchange(1),
                      Parallelization((0, 4, 0)), Im2col(), Vectorization()))
    back = schedule_from_json(schedule_to_json(sched))
    assert back == sched
    d = json.loads(schedule_to_json(Schedule((Tiling((2, 0, 0)),))))
    assert d == {"actions": [{"t": "Tiling", "sizes": [2, 0, 0]}]}


def test_schedule_validate():
    Schedule((Parallelization((0,)), Vectorization())).validate()
    with pytest.raises(AlreadyParallelized):
        Schedule((Parallelization((0,)), Parallelization((0,)))).validate()
    with pytest.raises(AlreadyVectorized):
        Schedule((Vectorization(), Interchange(0))).validate()


def test_candidate_tile_sizes():
    op = build_operation("matmul", (64, 64, 64))
    assert candidate_tile_sizes(op.loops[0], 5) == [0, 2, 4, 8, 16]
    small = build_operation("matmul", (6, 6, 6))
    assert candidate_tile_sizes(small.loops[0], 5) == [0, 2, 0, 0, 0]


def test_action_space_size():
    assert action_space_size(7, 5) == 2 * 5 ** 7 + 5040 + 2
    assert action_space_size(1, 1) == 2 * 1 + 1 + 2


def test_mask_budget_soundness(limits):
    """Any joint per-loop sample from the tile mask fits the loop budget."""
    rng = np.random.default_rng(0)
    for _ in range(50):
        op = small_random_op(rng)
        mask = compute_mask(op, Schedule(), 0, limits)
        nonzero_rows = sum(bool(mask.tile[i, 1:].any()) for i in range(limits.N))
        assert op.n + nonzero_rows <= limits.N
        assert mask.tile[:, 0].all()
        assert not mask.tile[:, limits.M].any()  # padding column stays masked


def test_mask_last_step_vector_only(limits):
    op = build_operation("matmul", (8, 8, 8))
    mask = compute_mask(op, Schedule(), limits.tau - 1, limits)
    assert list(mask.transform) == [False, False, False, False, True]


def test_mask_transform_bits(limits):
    conv = build_operation("conv2d", (1, 6, 6, 4, 4, 2, 2))
    mask = compute_mask(conv, Schedule(), 0, limits)
    assert mask.transform[3]  # im2col available on conv
    assert not mask.transform[0]  # 7 loops leave no tiling budget
    mm = build_operation("matmul", (8, 8, 8))
    m2 = compute_mask(mm, Schedule((Parallelization((0, 0, 0)),)), 1, limits)
    assert not m2.transform[1]
    r1 = build_operation("relu", (8,))
    m3 = compute_mask(r1, Schedule(), 0, limits)
    assert not m3.transform[2]  # single loop: no interchange
    assert not m3.transform[3]


def test_mask_permits_and_build_action(limits):
    op = build_operation("matmul", (64, 64, 64))
    mask = compute_mask(op, Schedule(), 0, limits)
    a = build_action(op, limits, 0, tile_idx=[1, 2, 0])
    assert a == Tiling((2, 4, 0))
    assert mask_permits(op, mask, a, limits)
    assert not mask_permits(op, mask, Tiling((3, 0, 0)), limits)
    assert not mask_permits(op, mask, Tiling((2, 2)), limits)
    assert mask_permits(op, mask, Interchange(1), limits)
    assert not mask_permits(op, mask, Interchange(5), limits)
    assert not mask_permits(op, mask, Im2col(), limits)


def test_random_masked_actions_always_apply(limits):
    rng = np.random.default_rng(1)
    for _ in range(100):
        op = small_random_op(rng)
        sched = Schedule()
        cur = op
        for step in range(limits.tau):
            mask = compute_mask(cur, sched, step, limits)
            action = sample_random_action(cur, mask, limits, rng)
            cur = run_actions(cur, Schedule((action,)), limits.N)
            sched = sched.appended(action)
            if isinstance(action, Vectorization):
                break
        sched.validate()
