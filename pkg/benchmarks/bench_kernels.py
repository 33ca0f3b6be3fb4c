"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run on identical inputs through both backends; results are
checked for equality before timings are printed.
"""

import argparse
import sys
import timeit

import numpy as np

from subgroup_audit import kernels
from subgroup_audit.splitting import count_table


def _inputs(rng, rows, n_groups, n_blocks):
    codes = rng.integers(0, n_groups, rows)
    block = rng.integers(0, n_blocks, rows)
    y = (rng.random(rows) < 0.4).astype(np.int64)
    n, s = count_table(codes, n_groups, y, block, n_blocks)
    return codes, block, y, n, s


def cases(seed=0):
    rng = np.random.default_rng(seed)
    codes, block, y, n, s = _inputs(rng, 5000, 10, 2)
    yield "quadratic_stat (10 groups x 2 blocks)", "quadratic_stat", (n, s)
    yield "best_ordered_cut (10 bins)", "best_ordered_cut", (n, s, 7)
    codes6, block6, y6, n6, s6 = _inputs(rng, 5000, 6, 1)
    yield "best_subset (6 levels)", "best_subset", (n6, s6, 7)
    c, b, yy, nn, ss = _inputs(rng, 28, 4, 2)
    stat, _ = kernels.python_backend.quadratic_stat(nn, ss)
    yield ("mc_exceed (28 rows, 10^4 permutations)", "mc_exceed",
           (c, 4, b, 2, yy, 10_000, 12345, stat))


def _same(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, float):
        return a == b or abs(a - b) <= 1e-9 * max(1.0, abs(a))
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    py, cy = kernels.python_backend, kernels.compiled_backend
    if cy is None:
        print("compiled backend not built; nothing to compare", file=sys.stderr)
        return 1
    print(f"{'kernel':44s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, name, argv_ in cases():
        f_py, f_cy = getattr(py, name), getattr(cy, name)
        if not _same(f_py(*argv_), f_cy(*argv_)):
            print(f"{label}: backends disagree", file=sys.stderr)
            return 2
        t_py = min(timeit.repeat(lambda: f_py(*argv_), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: f_cy(*argv_), number=1, repeat=args.repeat))
        print(f"{label:44s} {1e3 * t_py:10.3f} {1e3 * t_cy:10.3f} {t_py / t_cy:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
