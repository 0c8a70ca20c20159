"""CSV report writers and the matplotlib figures rendered next to them."""
from __future__ import annotations

import csv
from typing import List, Mapping, Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .autosched import SearchTrace
from .transforms import schedule_to_json

TRAINING_FIELDS = ("iteration", "mean_reward", "mean_speedup",
                   "policy_loss", "value_loss", "entropy")
EVALUATION_FIELDS = ("op_id", "kind", "base_cost", "rl_cost", "rl_speedup",
                     "baseline_cost", "baseline_speedup", "ratio")
TRACE_FIELDS = ("index", "schedule", "cost", "speedup", "best_so_far", "error")
CURVE_FIELDS = ("candidates", "rl_best_speedup", "baseline_best_speedup")


def _write_csv(path, fields: Sequence[str], rows: Sequence[Mapping]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(fields))
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in fields})


def write_training_log(path, log: Sequence[Mapping]) -> None:
    _write_csv(path, TRAINING_FIELDS, log)


def write_evaluation(path, rows: Sequence[Mapping]) -> None:
    _write_csv(path, EVALUATION_FIELDS, rows)


def write_trace(path, trace: SearchTrace) -> None:
    rows = []
    for e in trace.entries:
        rows.append({
            "index": e.index,
            "schedule": schedule_to_json(e.schedule),
            "cost": e.cost,
            "speedup": e.speedup,
            "best_so_far": e.best_so_far,
            "error": e.error or "",
        })
    _write_csv(path, TRACE_FIELDS, rows)


def write_curves(path, rl_best: Sequence[float],
                 baseline_best: Sequence[float]) -> None:
    n = max(len(rl_best), len(baseline_best))
    rows = []
    for i in range(n):
        rows.append({
            "candidates": i + 1,
            "rl_best_speedup": rl_best[i] if i < len(rl_best) else "",
            "baseline_best_speedup": baseline_best[i] if i < len(baseline_best) else "",
        })
    _write_csv(path, CURVE_FIELDS, rows)


def cumulative_best(values: Sequence[float]) -> List[float]:
    out: List[float] = []
    best = float("-inf")
    for v in values:
        best = max(best, v)
        out.append(best)
    return out


# --- figures --------------------------------------------------------------

def plot_training(path, log: Sequence[Mapping]) -> None:
    its = [row["iteration"] for row in log]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(its, [row["mean_speedup"] for row in log])
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("mean episode speedup")
    axes[1].plot(its, [row["mean_reward"] for row in log])
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("mean episode reward")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trace(path, trace: SearchTrace) -> None:
    idx = [e.index for e in trace.entries]
    best = [e.best_so_far for e in trace.entries]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(idx, best, where="post")
    ax.set_xlabel("candidates evaluated")
    ax.set_ylabel("best speedup so far")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_curves(path, rl_best: Sequence[float],
                baseline_best: Sequence[float],
                title: Optional[str] = None) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(range(1, len(rl_best) + 1), rl_best, where="post",
            label="policy samples")
    ax.step(range(1, len(baseline_best) + 1), baseline_best, where="post",
            label="exhaustive search")
    ax.set_xlabel("schedules evaluated")
    ax.set_ylabel("best speedup so far")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
