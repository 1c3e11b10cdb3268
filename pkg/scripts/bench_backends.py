#!/usr/bin/env python3
"""Benchmark the numba kernel path against the pure-numpy fallback.

The backend is chosen at import time from IMPULSEGAME_BACKEND, so each
measurement runs in a fresh subprocess.  Reported times are for full
backward solves of the catalog problems at the default resolution; the
first numba run includes JIT compilation, so a warmup solve runs first.

Usage: python3 scripts/bench_backends.py [repeats]
"""

import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from impulsegame import builtin, active_backend
from impulsegame.grid import Grid, TimeMesh
from impulsegame.solver import solve_qvi

cases = {
    "dg1": ((-6.0, 6.0), 241),
    "dg1-rich": ((-6.0, 6.0), 241),
    "txcost": ((-2.0, 4.0), 241),
}
repeats = int(sys.argv[1])

spec = builtin("dg1")
solve_qvi(spec, Grid([-6.0], [6.0], [61]), TimeMesh(0.0, 1.0, 10))  # warmup/JIT

out = {"backend": active_backend(), "cases": {}}
for name, ((lo, hi), n) in cases.items():
    spec = builtin(name)
    grid = Grid([lo], [hi], [n])
    mesh = TimeMesh(spec.t0, spec.horizon, 100)
    times = []
    checksum = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        fieldv, _ = solve_qvi(spec, grid, mesh)
        times.append(time.perf_counter() - t0)
        checksum = float(np.sum(fieldv.values))
    out["cases"][name] = {"best_s": min(times), "mean_s": sum(times) / len(times),
                          "checksum": checksum}
print(json.dumps(out))
"""


def run(backend: str, repeats: int) -> dict:
    env = dict(os.environ, IMPULSEGAME_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeats)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.splitlines()[-1])


def main() -> int:
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    results = {b: run(b, repeats) for b in ("numba", "numpy")}
    print(f"{'problem':<10} {'numba best':>12} {'numpy best':>12} {'speedup':>9}  match")
    for name in results["numba"]["cases"]:
        nb = results["numba"]["cases"][name]
        np_ = results["numpy"]["cases"][name]
        speedup = np_["best_s"] / nb["best_s"]
        match = "yes" if nb["checksum"] == np_["checksum"] else "NO"
        print(f"{name:<10} {nb['best_s']:>10.3f}s {np_['best_s']:>10.3f}s "
              f"{speedup:>8.2f}x  {match}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
