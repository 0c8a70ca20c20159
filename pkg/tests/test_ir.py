import json

import numpy as np
import pytest

from loopopt.errors import ShapeArity, TooManyLoops
from loopopt.ir import (DEFAULT_TRAIN_COUNTS, LoopDim, OpKind, build_operation,
                        generate_dataset, load_dataset, op_from_json,
                        op_to_dict, op_to_json, save_dataset, trip_count)


def test_matmul_structure():
    op = build_operation("matmul", (4, 6, 8))
    assert op.n == 3
    assert [l.trip for l in op.loops] == [4, 6, 8]
    # A[i, k], B[k, j], C[i, j]
    assert op.loads[0].rows == ((1, 0, 0, 0), (0, 0, 1, 0))
    assert op.loads[1].rows == ((0, 0, 1, 0), (0, 1, 0, 0))
    assert op.store.rows == ((1, 0, 0, 0), (0, 1, 0, 0))
    assert op.counts.as_tuple() == (1, 0, 1, 0, 0, 0)
    assert trip_count(op) == 4 * 6 * 8


def test_conv2d_structure():
    op = build_operation("conv2d", (2, 8, 8, 4, 8, 3, 3))
    assert op.n == 7
    # loop order b, oh, ow, co, kh, kw, ci with oh = ow = 6
    assert [l.trip for l in op.loops] == [2, 6, 6, 8, 3, 3, 4]
    # input row for the height subscript pairs oh and kh coefficients
    assert op.loads[0].rows[1] == (0, 1, 0, 0, 1, 0, 0, 0)
    assert op.loads[0].rows[2] == (0, 0, 1, 0, 0, 1, 0, 0)
    assert op.loads[1].rows[3] == (0, 0, 0, 1, 0, 0, 0, 0)  # weights[..., co]
    assert op.store.rows[0] == (1, 0, 0, 0, 0, 0, 0, 0)


def test_maxpool_and_elementwise():
    mp = build_operation("maxpool", (1, 6, 6, 4, 2, 2))
    assert mp.n == 6 and len(mp.loads) == 1
    add = build_operation("add", (8, 8))
    assert add.n == 2 and len(add.loads) == 2
    assert add.loads[0].rows == ((1, 0, 0), (0, 1, 0))
    relu = build_operation("relu", (16,))
    assert relu.n == 1 and len(relu.loads) == 1


def test_loop_trip_with_step():
    assert LoopDim(0, 64, 32).trip == 2
    assert LoopDim(0, 7, 2).trip == 4


def test_shape_validation():
    with pytest.raises(ShapeArity):
        build_operation("matmul", (4, 4))
    with pytest.raises(ShapeArity):
        build_operation("conv2d", (1, 2, 2, 4, 4, 3, 3))  # kernel > spatial
    with pytest.raises(ShapeArity):
        build_operation("add", (0,))
    with pytest.raises(TooManyLoops):
        build_operation("conv2d", (1, 8, 8, 4, 4, 3, 3), max_loops=6)


def test_dataset_deterministic_and_counts():
    a = generate_dataset(3, {OpKind.MATMUL: 4, OpKind.CONV2D: 2})
    b = generate_dataset(3, {OpKind.MATMUL: 4, OpKind.CONV2D: 2})
    assert [op.shape for op in a] == [op.shape for op in b]
    assert sum(op.kind is OpKind.MATMUL for op in a) == 4
    assert sum(op.kind is OpKind.CONV2D for op in a) == 2


def test_dataset_default_mix_sizes():
    ops = generate_dataset(0)
    assert len(ops) == sum(DEFAULT_TRAIN_COUNTS.values())
    for op in ops:
        assert op.n <= 7
        assert all(l.trip >= 1 for l in op.loops)


def test_json_line_schema():
    op = build_operation("matmul", (8, 8, 8))
    d = json.loads(op_to_json(op))
    assert set(d) == {"kind", "shape", "loops", "loads", "store", "counts"}
    assert d["loops"][0] == {"lower": 0, "upper": 8, "step": 1}


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    ops = generate_dataset(1, {k: 3 for k in OpKind})
    path = tmp_path / "ops.jsonl"
    save_dataset(path, ops)
    back = load_dataset(path)
    assert back == ops


def test_json_roundtrip_preserves_transform_state():
    from loopopt.transforms import apply_parallelization, apply_vectorization
    op = build_operation("matmul", (8, 8, 8))
    op = apply_vectorization(apply_parallelization(op, (2, 0, 0)))
    back = op_from_json(op_to_json(op))
    assert back == op
    assert back.loops[0].parallel and back.vectorized
