"""Compiled vs numpy history kernels.

Times ``product_sums`` and ``l1_sums`` on graded grids (the nonuniform path
the extension accelerates) for both backends, and checks they agree.

    python benchmarks/bench_kernels.py --sizes 1024 2048 4096
"""

import argparse
import json
import time

import numpy as np

from fracthermistor import kernels
from fracthermistor.fracops import graded_grid


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def bench(sizes, repeat, mu):
    try:
        fast = kernels.get_backend("cython")
    except ImportError:
        fast = None
    slow = kernels.get_backend("python")
    rows = []
    for n in sizes:
        t = graded_grid(0.0, 1.0, n - 1, 2.0).points
        v = np.cos(3.0 * t)
        q = np.diff(v) / np.diff(t)
        cases = {
            "product_sums": lambda mod: mod.product_sums(t, v, mu, 1, 0, n - 1),
            "l1_sums": lambda mod: mod.l1_sums(t, q, mu),
        }
        for name, call in cases.items():
            t_py, out_py = _best(lambda: call(slow), repeat)
            row = {"kernel": name, "n": n, "python_s": t_py, "cython_s": None, "speedup": None, "max_rel_diff": None}
            if fast is not None:
                t_cy, out_cy = _best(lambda: call(fast), repeat)
                scale = max(1.0, float(np.max(np.abs(out_py))))
                row.update(
                    cython_s=t_cy,
                    speedup=t_py / t_cy,
                    max_rel_diff=float(np.max(np.abs(out_cy - out_py))) / scale,
                )
            rows.append(row)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[512, 1024, 2048, 4096])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--mu", type=float, default=-0.5, help="kernel exponent in (-1, 0)")
    parser.add_argument("--json", action="store_true", help="print rows as JSON")
    args = parser.parse_args()
    rows = bench(args.sizes, args.repeat, args.mu)
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'kernel':<14}{'n':>7}{'python [s]':>12}{'cython [s]':>12}{'speedup':>9}{'rel diff':>11}")
    for r in rows:
        cy = "n/a" if r["cython_s"] is None else f"{r['cython_s']:.4f}"
        sp = "n/a" if r["speedup"] is None else f"{r['speedup']:.1f}x"
        df = "n/a" if r["max_rel_diff"] is None else f"{r['max_rel_diff']:.1e}"
        print(f"{r['kernel']:<14}{r['n']:>7}{r['python_s']:>12.4f}{cy:>12}{sp:>9}{df:>11}")


if __name__ == "__main__":
    main()
