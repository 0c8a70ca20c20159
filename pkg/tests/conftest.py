import numpy as np
import pytest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One summary line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "criterion" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"  {name}: {status}")

from loopopt.features import EnvLimits
from loopopt.ir import OpKind, build_operation


@pytest.fixture
def limits():
    return EnvLimits()


def small_random_op(rng: np.random.Generator, max_dim: int = 8):
    """Random op with every loop trip <= max_dim (interpreter-friendly)."""
    evens = [d for d in (2, 4, 6, 8) if d <= max_dim]
    kind = list(OpKind)[int(rng.integers(len(OpKind)))]
    if kind is OpKind.MATMUL:
        shape = tuple(int(rng.choice(evens)) for _ in range(3))
    elif kind is OpKind.CONV2D:
        kh, kw = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        shape = (int(rng.integers(1, 3)), int(rng.choice(evens[1:])),
                 int(rng.choice(evens[1:])), int(rng.choice((2, 4))),
                 int(rng.choice((2, 4))), kh, kw)
    elif kind is OpKind.MAXPOOL:
        kh, kw = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        shape = (int(rng.integers(1, 3)), int(rng.choice(evens[1:])),
                 int(rng.choice(evens[1:])), int(rng.choice((2, 4))), kh, kw)
    else:
        rank = int(rng.integers(1, 4))
        shape = tuple(int(rng.choice(evens)) for _ in range(rank))
    return build_operation(kind, shape)
