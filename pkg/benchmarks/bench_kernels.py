"""Time the compiled kernels against the numpy fallback.

Run after building the extension:

    python benchmarks/bench_kernels.py --repeat 20
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from memrecall import kernels


def workloads(rng):
    nb, nc = 16, 2048
    dist2 = rng.uniform(size=(nb, nc))
    steps = np.tile(np.arange(nc, dtype=np.int64), (nb, 1))
    valid = np.ones((nb, nc), dtype=bool)
    t, b = 200, 16
    deltas, disc, cs = rng.normal(size=(t, b)), np.full((t, b), 0.99), rng.uniform(size=(t, b))
    curve = rng.normal(size=5000)
    n = 31 * 31 * 4
    nxt = rng.integers(0, n, size=(n, 8))
    goal = np.zeros(n, dtype=bool)
    goal[0] = True
    return {
        "knn_select (16 x 2048, k=10)": ("knn_select", (dist2, steps, valid, 10)),
        "vtrace_scan (200 x 16)": ("vtrace_scan", (deltas, disc, cs)),
        "ewma (5000)": ("ewma", (curve, 0.05)),
        "rolling_mean (5000, w=10)": ("rolling_mean", (curve, 10)),
        "distance_field (3844 states)": ("distance_field", (nxt, goal)),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if kernels.compiled_backend is None:
        parser.exit(1, "compiled extension not available; build with `pip install -e .`\n")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<32} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for label, (name, inputs) in workloads(rng).items():
        times = {}
        for backend in ("python_backend", "compiled_backend"):
            fn = getattr(getattr(kernels, backend), name)
            times[backend] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat)) * 1e3
        py, cy = times["python_backend"], times["compiled_backend"]
        print(f"{label:<32} {py:10.3f} {cy:10.3f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
