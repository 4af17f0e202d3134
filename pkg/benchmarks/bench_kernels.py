"""Compare the compiled kernels with the NumPy fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.
Prints per-call times for the model evaluation and the Bernstein basis,
the speedup, and the largest difference between the two backends, then the
wall time per walking step of the shipped experiment under each backend.
"""
import argparse
import os
import subprocess
import sys
import timeit
from pathlib import Path

import numpy as np

from slipgait import _kernels_py
from slipgait.dynamics import BipedModel, ModelParams

try:
    from slipgait import _kernels as compiled
except ImportError:
    compiled = None


def bench(fn, args, repeat):
    n = max(1, repeat)
    return min(timeit.repeat(lambda: fn(*args), number=n, repeat=5)) / n


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=2000)
    p.add_argument("--steps", type=int, default=10, help="walking steps per backend (0 skips)")
    args = p.parse_args()
    if compiled is None:
        print("compiled kernels are not built; only the fallback is available")
    m = BipedModel(ModelParams())
    rng = np.random.default_rng(0)
    q, dq = rng.uniform(-1, 1, 7), rng.normal(size=7)
    cases = {
        "eval_model": ("eval_model", (m.WX, m.WY, m.C, m.mass, m.inertia, m.params.gravity, q, dq)),
        "bernstein(5)": ("bernstein", (5, 0.37)),
    }
    print(f"{'kernel':<14}{'python [us]':>14}{'compiled [us]':>16}{'speedup':>10}{'max diff':>12}")
    for label, (name, a) in cases.items():
        t_py = bench(getattr(_kernels_py, name), a, args.repeat)
        if compiled is None:
            print(f"{label:<14}{t_py * 1e6:>14.2f}{'-':>16}{'-':>10}{'-':>12}")
            continue
        t_c = bench(getattr(compiled, name), a, args.repeat)
        diff = max(float(np.abs(np.asarray(x) - y).max())
                   for x, y in zip(getattr(compiled, name)(*a), getattr(_kernels_py, name)(*a)))
        print(f"{label:<14}{t_py * 1e6:>14.2f}{t_c * 1e6:>16.2f}{t_py / t_c:>10.1f}{diff:>12.1e}")
    if args.steps > 0:
        print()
        for backend, flag in (("python", "1"), ("compiled", "0")):
            if backend == "compiled" and compiled is None:
                continue
            print(f"{backend:<10}{step_time(flag, args.steps) * 1e3:>10.1f} ms per step")


STEP_SCRIPT = """
import sys, time
from slipgait.cli import load_config, simulate
cfg = load_config(sys.argv[1])
cfg.n_steps = int(sys.argv[2])
t = time.perf_counter()
simulate(cfg, "controlled", dense=False)
print((time.perf_counter() - t) / cfg.n_steps)
"""


def step_time(flag, n):
    cfg = Path(__file__).resolve().parents[1] / "configs" / "paper_experiment.json"
    env = dict(os.environ, SLIPGAIT_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", STEP_SCRIPT, str(cfg), str(n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


if __name__ == "__main__":
    main()
