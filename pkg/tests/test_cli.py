import csv
import json
import os

import numpy as np
import pytest

from loopopt.cli import main
from loopopt.ir import load_dataset


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    rc = main(["generate", "--counts", "matmul=2,relu=2", "--seed", "9",
               "--out", str(out)])
    assert rc == 0
    return out


def test_generate_counts_and_determinism(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert main(["generate", "--counts", "matmul=3", "--val-counts",
                     "relu=2", "--seed", "4", "--out", str(out)]) == 0
    assert (a / "train.jsonl").read_text() == (b / "train.jsonl").read_text()
    assert len(load_dataset(a / "train.jsonl")) == 3
    assert len(load_dataset(a / "validation.jsonl")) == 2


def test_generate_counts_without_val_is_empty_validation(data_dir):
    assert load_dataset(data_dir / "validation.jsonl") == []
    assert len(load_dataset(data_dir / "train.jsonl")) == 4


def test_train_evaluate_pipeline(tmp_path, data_dir):
    run = tmp_path / "run"
    rc = main(["train", "--dataset", str(data_dir / "train.jsonl"),
               "--iterations", "2", "--hidden", "16", "--depth", "2",
               "--seed", "1", "--out", str(run)])
    assert rc == 0
    assert (run / "checkpoint.npz").exists()
    assert (run / "training_curve.png").stat().st_size > 0
    with open(run / "train_log.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert set(rows[0]) == {"iteration", "mean_reward", "mean_speedup",
                            "policy_loss", "value_loss", "entropy"}

    out = tmp_path / "eval"
    os.environ["OPT_GYM_THREADS"] = "2"
    try:
        rc = main(["evaluate", "--checkpoint", str(run / "checkpoint.npz"),
                   "--dataset", str(data_dir / "train.jsonl"), "--limit", "2",
                   "--samples", "4", "--out", str(out)])
    finally:
        del os.environ["OPT_GYM_THREADS"]
    assert rc == 0
    with open(out / "evaluation.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert set(rows[0]) == {"op_id", "kind", "base_cost", "rl_cost",
                            "rl_speedup", "baseline_cost", "baseline_speedup",
                            "ratio"}
    assert (out / "curves.csv").exists() and (out / "curves.png").stat().st_size > 0


def test_autoschedule_and_apply(tmp_path, data_dir):
    sched_dir = tmp_path / "sched"
    rc = main(["autoschedule", "--dataset", str(data_dir / "train.jsonl"),
               "--index", "0", "--out", str(sched_dir)])
    assert rc == 0
    sched = json.loads((sched_dir / "schedule.json").read_text())
    assert "actions" in sched and isinstance(sched["actions"], list)
    with open(sched_dir / "trace.csv") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["index"] == "0"
    best = [float(r["best_so_far"]) for r in rows]
    assert best == sorted(best)
    assert (sched_dir / "trace.png").stat().st_size > 0

    obs_path = tmp_path / "obs.txt"
    rc = main(["apply", "--dataset", str(data_dir / "train.jsonl"),
               "--index", "0", "--schedule", str(sched_dir / "schedule.json"),
               "--dump-obs", str(obs_path)])
    assert rc == 0
    assert np.loadtxt(obs_path).shape == (290,)


def test_apply_verify_small(tmp_path):
    data = tmp_path / "d"
    assert main(["generate", "--counts", "matmul=1", "--seed", "12",
                 "--out", str(data)]) == 0
    sched_file = tmp_path / "s.json"
    sched_file.write_text(json.dumps({"actions": [
        {"t": "Tiling", "sizes": [4, 4, 0]}, {"t": "Interchange", "k": 1},
        {"t": "Vectorization"}]}))
    rc = main(["apply", "--dataset", str(data / "train.jsonl"), "--index", "0",
               "--schedule", str(sched_file), "--verify"])
    assert rc == 0


def test_exit_codes(tmp_path, data_dir):
    # usage errors -> 1
    assert main(["train"]) == 1                      # missing required flag
    assert main(["generate", "--counts", "bogus=1", "--out", str(tmp_path)]) == 1
    assert main(["apply", "--dataset", str(data_dir / "train.jsonl"),
                 "--index", "99", "--schedule", "x.json"]) == 1
    assert main([]) == 1
    # runtime errors -> 2
    assert main(["train", "--dataset", str(tmp_path / "missing.jsonl"),
                 "--iterations", "1", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"actions": [
        {"t": "Parallelization", "sizes": [0, 0, 0]},
        {"t": "Parallelization", "sizes": [0, 0, 0]}]}))
    rc = main(["apply", "--dataset", str(data_dir / "train.jsonl"),
               "--index", "0", "--schedule", str(bad)])
    assert rc == 2


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "generate" in capsys.readouterr().out
