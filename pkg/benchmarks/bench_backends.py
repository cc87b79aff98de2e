"""Benchmark the compiled bag-calibration kernel against the NumPy fallback.

Shapes mirror the desk-scale study: n sampled units, q components, B bag
iterations of c components each.  Run from the repository root:

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --n 85 --q 87 --B 100 --reps 30
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bagcalib._core import pykernel

try:
    from bagcalib._core import kernel
except ImportError:
    kernel = None


def make_problem(rng, n, q, n_iter, c):
    scores = rng.normal(size=(n, q))
    d = rng.uniform(1.0, 6.0, size=n)
    qk = np.ones(n)
    totals = np.zeros(q)
    comp_sets = np.stack(
        [rng.choice(q, size=c, replace=False) for _ in range(n_iter)]
    ).astype(np.int64)
    return scores, d, qk, totals, comp_sets


def time_call(fn, args, reps):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=85)
    parser.add_argument("--q", type=int, default=87)
    parser.add_argument("--B", type=int, default=100)
    parser.add_argument("--reps", type=int, default=30)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"n={args.n} q={args.q} B={args.B} (best of {args.reps})")
    header = f"{'c':>4} {'python':>12} {'compiled':>12} {'speedup':>8} {'max|dg|':>10}"
    print(header)
    print("-" * len(header))
    for c in (5, 10, 20, 40, 60):
        if c >= args.q:
            continue
        problem = make_problem(rng, args.n, args.q, args.B, c)
        call = (*problem, float(4 * args.n), 1e-10)
        t_py = time_call(pykernel.bag_gweights, call, args.reps)
        if kernel is None:
            print(f"{c:>4} {t_py * 1e3:>10.2f}ms {'missing':>12}")
            continue
        t_cy = time_call(kernel.bag_gweights, call, args.reps)
        g_py, f_py = pykernel.bag_gweights(*call)
        g_cy, f_cy = kernel.bag_gweights(*call)
        assert np.array_equal(f_py, f_cy)
        ok = f_py == 0
        gap = float(np.abs(g_py[ok] - g_cy[ok]).max()) if ok.any() else 0.0
        print(f"{c:>4} {t_py * 1e3:>10.2f}ms {t_cy * 1e3:>10.2f}ms "
              f"{t_py / t_cy:>7.1f}x {gap:>10.1e}")
    if kernel is None:
        print("compiled extension not built; install with "
              "`pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()
