"""Command-line interface: generate | train | evaluate | autoschedule | apply.

Exit codes: 0 success, 1 usage error, 2 runtime error.  The OPT_GYM_THREADS
environment variable caps evaluation worker threads.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import agent, reports
from .autosched import SearchConstraints, search
from .config import RunConfig
from .cost import (AnalyticBackend, MeasuredBackend, im2col_pack, interpret,
                   random_inputs)
from .envs import LoopEnv, RewardMode, run_schedule
from .errors import LoopOptError
from .features import HistoryTensor, extract, record_history
from .ir import (DEFAULT_TRAIN_COUNTS, DEFAULT_VAL_COUNTS, OpKind,
                 generate_dataset, load_dataset, save_dataset)
from .transforms import Im2col, apply_action, schedule_from_json, schedule_to_json


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_counts(text: str) -> dict:
    """Parse 'matmul=10,conv2d=5' into per-kind counts (others zero)."""
    out = {kind: 0 for kind in OpKind}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            name, value = part.split("=")
            out[OpKind(name.strip())] = int(value)
        except (ValueError, KeyError) as exc:
            raise _UsageError(f"bad counts entry {part!r}: {exc}") from exc
    return out


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _make_backend(name: str, cfg: RunConfig):
    if name == "measured":
        return MeasuredBackend(cfg.cost)
    return AnalyticBackend(cfg.cost)


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("OPT_GYM_THREADS")
    workers = os.cpu_count() or 1
    if cap is not None:
        try:
            workers = max(1, int(cap))
        except ValueError as exc:
            raise _UsageError(f"OPT_GYM_THREADS must be an integer: {cap!r}") from exc
    return max(1, min(workers, n_tasks))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands ----------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _load_config(args)
    counts = _parse_counts(args.counts) if args.counts else dict(DEFAULT_TRAIN_COUNTS)
    if args.val_counts:
        val_counts = _parse_counts(args.val_counts)
    elif args.counts:
        # an explicit training split without a validation split means
        # "no validation ops", not the default validation mix
        val_counts = {kind: 0 for kind in OpKind}
    else:
        val_counts = dict(DEFAULT_VAL_COUNTS)
    out = _outdir(args)
    train_ops = generate_dataset(cfg.seed, counts)
    val_ops = generate_dataset(cfg.seed + 1, val_counts)
    save_dataset(out / "train.jsonl", train_ops)
    save_dataset(out / "validation.jsonl", val_ops)
    print(f"wrote {len(train_ops)} training ops to {out / 'train.jsonl'}")
    print(f"wrote {len(val_ops)} validation ops to {out / 'validation.jsonl'}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset = load_dataset(args.dataset)
    if not dataset:
        raise LoopOptError(f"dataset {args.dataset} is empty")
    mode = RewardMode(args.reward or cfg.reward_mode)
    space = args.space or cfg.action_space
    backend = _make_backend(args.backend, cfg)
    out = _outdir(args)
    policy, log = agent.train(
        dataset, cfg.ppo, cfg.limits, cost_cfg=cfg.cost, mode=mode,
        space=space, seed=cfg.seed, iterations=args.iterations,
        backend=backend, hidden=args.hidden, depth=args.depth)
    agent.save_checkpoint(out / "checkpoint.npz", policy)
    reports.write_training_log(out / "train_log.csv", log)
    reports.plot_training(out / "training_curve.png", log)
    last = log[-1] if log else {}
    print(f"trained {len(log)} iterations "
          f"(mean speedup {last.get('mean_speedup', float('nan')):.3f}); "
          f"checkpoint at {out / 'checkpoint.npz'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    policy = agent.load_checkpoint(args.checkpoint)
    ops = load_dataset(args.dataset)
    if args.limit:
        ops = ops[:args.limit]
    if not ops:
        raise LoopOptError(f"dataset {args.dataset} is empty")
    mode = RewardMode(cfg.reward_mode)
    out = _outdir(args)

    def eval_one(item):
        op_id, op = item
        backend = _make_backend(args.backend, cfg)
        env = LoopEnv(cfg.limits, cfg.cost, mode=mode, backend=backend)
        rl_sched, rl_speedup = agent.greedy_rollout(env, op, policy)
        base = backend.cost(op).total
        if rl_speedup is None:
            rl_speedup = 0.0
        _, base_speedup, _ = search(op, cfg.search, backend=backend)
        return {
            "op_id": op_id,
            "kind": op.kind.value,
            "base_cost": base,
            "rl_cost": base / rl_speedup if rl_speedup else float("nan"),
            "rl_speedup": rl_speedup,
            "baseline_cost": base / base_speedup,
            "baseline_speedup": base_speedup,
            "ratio": rl_speedup / base_speedup if base_speedup else float("nan"),
        }

    with ThreadPoolExecutor(max_workers=_worker_count(len(ops))) as pool:
        rows = list(pool.map(eval_one, enumerate(ops)))
    reports.write_evaluation(out / "evaluation.csv", rows)

    ratios = [r["ratio"] for r in rows if math.isfinite(r["ratio"]) and r["ratio"] > 0]
    geomean = math.exp(sum(math.log(r) for r in ratios) / len(ratios)) if ratios else float("nan")

    # search-efficiency comparison on the first op: best-so-far speedup of
    # policy samples vs the exhaustive enumeration order
    rng = np.random.default_rng(cfg.seed)
    backend = _make_backend(args.backend, cfg)
    env = LoopEnv(cfg.limits, cfg.cost, mode=mode, backend=backend)
    samples = agent.sample_rollouts(env, ops[0], policy, args.samples, rng)
    rl_curve = reports.cumulative_best([sp for _, sp in samples])
    _, _, trace = search(ops[0], cfg.search, backend=backend)
    base_curve = [e.best_so_far for e in trace.entries[1:]] or [1.0]
    reports.write_curves(out / "curves.csv", rl_curve, base_curve)
    reports.plot_curves(out / "curves.png", rl_curve, base_curve,
                        title=f"op 0 ({ops[0].kind.value})")

    print(f"evaluated {len(rows)} ops; "
          f"geomean speedup ratio (policy / exhaustive): {geomean:.3f}")
    print(f"reports in {out}")
    return 0


def cmd_autoschedule(args) -> int:
    cfg = _load_config(args)
    ops = load_dataset(args.dataset)
    if not 0 <= args.index < len(ops):
        raise _UsageError(f"--index {args.index} outside dataset of {len(ops)} ops")
    op = ops[args.index]
    cons = SearchConstraints(
        max_tile=args.max_tile if args.max_tile is not None else cfg.search.max_tile,
        min_tiled_loops=args.min_tiled if args.min_tiled is not None else cfg.search.min_tiled_loops,
        max_schedule_len=cfg.search.max_schedule_len,
        loop_budget=args.budget if args.budget is not None else cfg.search.loop_budget,
    )
    backend = _make_backend(args.backend, cfg)
    best, speedup, trace = search(op, cons, backend=backend)
    out = _outdir(args)
    (out / "schedule.json").write_text(schedule_to_json(best) + "\n")
    reports.write_trace(out / "trace.csv", trace)
    reports.plot_trace(out / "trace.png", trace)
    print(f"evaluated {len(trace.entries) - 1} schedules "
          f"({trace.skipped} skipped); best speedup {speedup:.3f}")
    print(f"best schedule: {schedule_to_json(best)}")
    return 0


def _verify(op, final_op, schedule) -> bool:
    rng = np.random.default_rng(0)
    inputs = random_inputs(op, rng, integer=True)
    ref = interpret(op, inputs, safety_limit=256)
    if any(isinstance(a, Im2col) for a in schedule.actions):
        packed = im2col_pack(op.shape, inputs[0], inputs[1])
        got = interpret(final_op, packed, safety_limit=4096)
        ref = ref.reshape(got.shape)
    else:
        got = interpret(final_op, inputs, safety_limit=256)
    return np.allclose(ref, got)


def cmd_apply(args) -> int:
    cfg = _load_config(args)
    ops = load_dataset(args.dataset)
    if not 0 <= args.index < len(ops):
        raise _UsageError(f"--index {args.index} outside dataset of {len(ops)} ops")
    op = ops[args.index]
    schedule = schedule_from_json(Path(args.schedule).read_text())
    schedule.validate()

    backend = _make_backend(args.backend, cfg)
    final_op, speedup = run_schedule(op, schedule, cfg.cost, backend,
                                     max_loops=cfg.limits.N)
    print(f"applied {len(schedule)} actions; speedup {speedup:.3f}")

    if args.dump_obs:
        history = HistoryTensor.empty(cfg.limits)
        cur = op
        for step, action in enumerate(schedule.actions):
            history = record_history(history, action, step, cur.n)
            cur = apply_action(cur, action, cfg.limits.N)
        obs = extract(final_op, history, cfg.limits)
        np.savetxt(args.dump_obs, obs)
        print(f"wrote observation ({obs.shape[0]} values) to {args.dump_obs}")

    if args.verify:
        if not _verify(op, final_op, schedule):
            raise LoopOptError("verification failed: outputs differ")
        print("verification: outputs match")
    return 0


# --- parser ---------------------------------------------------------------

def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run-configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--backend", choices=("analytic", "measured"),
                        default="analytic", help="cost backend")

    parser = _Parser(prog="loopopt",
                     description="loop-nest optimization environment and agent")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("generate", parents=[common],
                       help="generate train/validation datasets")
    p.add_argument("--counts", help="per-kind counts, e.g. matmul=10,conv2d=5")
    p.add_argument("--val-counts", help="validation per-kind counts")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train a policy with PPO")
    p.add_argument("--dataset", required=True, help="training dataset (JSON lines)")
    p.add_argument("--reward", choices=("immediate", "final"))
    p.add_argument("--space", choices=("hier", "simple"))
    p.add_argument("--iterations", type=int, help="override configured iteration count")
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="greedy policy rollouts vs the exhaustive baseline")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--limit", type=int, help="evaluate only the first K ops")
    p.add_argument("--samples", type=int, default=50,
                   help="policy samples for the search-efficiency curve")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("autoschedule", parents=[common],
                       help="exhaustive schedule search for one op")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--budget", type=int, help="loop budget")
    p.add_argument("--max-tile", type=int)
    p.add_argument("--min-tiled", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_autoschedule)

    p = sub.add_parser("apply", parents=[common],
                       help="apply a schedule file to an op")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--schedule", required=True, help="schedule JSON file")
    p.add_argument("--verify", action="store_true",
                   help="check output equivalence with the reference interpreter")
    p.add_argument("--dump-obs", help="write the final observation vector here")
    p.set_defaults(func=cmd_apply)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help()
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse -h
        return int(exc.code or 0)
    except (LoopOptError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
