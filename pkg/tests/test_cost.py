import math

import numpy as np
import pytest

from loopopt.cost import (AnalyticBackend, CostConfig, MeasuredBackend,
                          analytic_cost, im2col_pack, input_shapes, interpret,
                          measure, output_shape, random_inputs)
from loopopt.errors import ExtentMismatch, SafetyLimitExceeded
from loopopt.ir import build_operation
from loopopt.transforms import (apply_im2col, apply_parallelization,
                                apply_tiling, apply_vectorization)

CFG = CostConfig()  # 32 KiB cache, 64 B lines, 8 cores, 8-wide vectors


def test_matmul_untiled_cost():
    op = build_operation("matmul", (64, 64, 64))
    r = analytic_cost(op, CFG)
    # compute: 64^3 iterations x (1 add + 1 mul)
    assert r.compute_term == 64 ** 3 * 2
    # with i fixed, A row + all of B + C row = (64 + 4096 + 64) * 4 B fits the
    # cache, so misses = 64 outer trips x 16896 B / 64 B = 16896 lines
    assert r.memory_term == 16896 * CFG.miss_penalty
    assert r.total == 659456.0


def test_matmul_tiling_helps_memory():
    op = build_operation("matmul", (64, 64, 64))
    tiled = apply_tiling(op, (32, 32, 32))
    r = analytic_cost(tiled, CFG)
    assert r.compute_term == 64 ** 3 * 2  # same work
    # 32x32 tiles of A, B, C total exactly 32 KiB -> misses only re-fill per
    # outermost trip: 2 x (32768 / 64) = 1024 lines
    assert r.memory_term == 1024 * CFG.miss_penalty
    assert r.total == 532480.0
    assert r.total < analytic_cost(op, CFG).total


def test_vectorization_factor_and_eligibility():
    op = build_operation("matmul", (64, 64, 64))
    v = apply_vectorization(apply_tiling(op, (32, 32, 32)))
    r = analytic_cost(v, CFG)
    assert r.compute_term == 64 ** 3 * 2 / CFG.vec_width
    assert r.total == 73728.0
    # an innermost coefficient of 2 breaks contiguity: no vector credit
    strided = apply_vectorization(build_operation("matmul", (8, 8, 8)))
    from dataclasses import replace
    from loopopt.ir import AccessMatrix
    rows = [list(r) for r in strided.loads[0].rows]
    rows[1][2] = 2
    strided = replace(strided, loads=(AccessMatrix.make(rows),) + strided.loads[1:])
    assert analytic_cost(strided, CFG).compute_term == 8 ** 3 * 2


def test_parallel_factor():
    op = build_operation("matmul", (64, 64, 64))
    par = apply_parallelization(op, (32, 32, 32))
    r = analytic_cost(par, CFG)
    # outer trips 2*2*2 = 8 >= cores
    assert r.compute_term == 64 ** 3 * 2 / CFG.cores
    small = apply_parallelization(build_operation("matmul", (64, 64, 64)),
                                  (32, 0, 0))
    assert analytic_cost(small, CFG).compute_term == 64 ** 3 * 2 / 2


def test_im2col_surcharge_counted():
    conv = build_operation("conv2d", (2, 8, 8, 4, 8, 3, 3))
    gem = apply_im2col(conv)
    from dataclasses import replace
    no_sur = replace(gem, im2col_surcharge=0)
    extra = analytic_cost(gem, CFG).total - analytic_cost(no_sur, CFG).total
    assert extra == 2592 * CFG.im2col_write_cost


def test_interpreter_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    op = build_operation("matmul", (6, 8, 4))
    a, b = random_inputs(op, rng)
    out = interpret(op, (a, b))
    np.testing.assert_allclose(out, a @ b, rtol=1e-12)


def test_interpreter_invariant_under_schedule():
    rng = np.random.default_rng(1)
    op = build_operation("matmul", (8, 8, 8))
    inputs = random_inputs(op, rng, integer=True)
    ref = interpret(op, inputs)
    t = apply_parallelization(apply_tiling(op, (4, 0, 2)), (0, 2, 0, 0, 0))
    np.testing.assert_array_equal(interpret(t, inputs), ref)


def test_interpreter_conv_and_pool():
    rng = np.random.default_rng(2)
    conv = build_operation("conv2d", (1, 5, 5, 2, 3, 2, 2))
    img, w = random_inputs(conv, rng)
    out = interpret(conv, (img, w))
    ref = np.zeros((1, 4, 4, 3))
    for y in range(4):
        for x in range(4):
            patch = img[0, y:y + 2, x:x + 2, :]
            ref[0, y, x] = np.tensordot(patch, w, axes=3)
    np.testing.assert_allclose(out, ref, rtol=1e-12)

    pool = build_operation("maxpool", (1, 5, 5, 2, 2, 2))
    (img2,) = random_inputs(pool, rng)
    out2 = interpret(pool, (img2,))
    for y in range(4):
        for x in range(4):
            np.testing.assert_allclose(
                out2[0, y, x], img2[0, y:y + 2, x:x + 2].max(axis=(0, 1)))


def test_interpreter_elementwise():
    rng = np.random.default_rng(3)
    add = build_operation("add", (4, 6))
    a, b = random_inputs(add, rng)
    np.testing.assert_array_equal(interpret(add, (a, b)), a + b)
    relu = build_operation("relu", (12,))
    (x,) = random_inputs(relu, rng)
    np.testing.assert_array_equal(interpret(relu, (x,)), np.maximum(x, 0))


def test_im2col_pack_equivalence():
    rng = np.random.default_rng(4)
    conv = build_operation("conv2d", (2, 6, 6, 3, 4, 3, 3))
    img, w = random_inputs(conv, rng)
    ref = interpret(conv, (img, w))
    gem = apply_im2col(conv)
    a, b = im2col_pack(conv.shape, img, w)
    out = interpret(gem, (a, b))
    np.testing.assert_allclose(out, ref.reshape(out.shape), rtol=1e-9)


def test_interpreter_guards():
    op = build_operation("matmul", (4, 4, 4))
    with pytest.raises(ExtentMismatch):
        interpret(op, (np.zeros((4, 4)),))  # missing second input
    with pytest.raises(ExtentMismatch):
        interpret(op, (np.zeros((2, 4)), np.zeros((4, 4))))
    big = build_operation("matmul", (128, 4, 4))
    with pytest.raises(SafetyLimitExceeded):
        interpret(big, random_inputs(big, np.random.default_rng(0)))
    assert input_shapes(op) == [(4, 4), (4, 4)]
    assert output_shape(op) == (4, 4)


def test_measure_and_backends():
    op = build_operation("matmul", (8, 8, 8))
    r = measure(op, repeats=2)
    assert r.total > 0 and not r.timed_out
    assert AnalyticBackend().cost(op).total == analytic_cost(op, CostConfig()).total
    m = MeasuredBackend(repeats=1)
    assert m.cost(op).total > 0
    # impossible budget: any run exceeds 10x a zero base time
    t = measure(op, repeats=1, base_time=1e-12)
    assert t.timed_out and math.isnan(t.total)
