"""Compiled vs pure-Python shooting kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Integrates the wedge and trapezoid weights across [delta, 1] at their first
eigenvalues and reports the best wall time per backend, the speedup, and the
largest end-state difference between the two.
"""
import argparse
import time

import numpy as np

from thinodal import _kernels
from thinodal.geometry import polynomial_weight

CASES = {
    "constant": ([1.0], 9.869604401089358, 0.0),
    "wedge": ([0.0, 1.0], 14.681970642123893, 1e-3),
    "trapezoid": ([1.0, 1.0], 10.218113344665941, 0.0),
}


def _run(fn, w, mu, x0):
    p = w.pieces
    flux0 = -mu * x0 * x0 / 2 if x0 > 0 else 0.0  # omega * phi' for omega = x near 0
    return fn(p.breaks, p.coefs, mu, x0, 1.0, flux0, 1.0, 1e-12, 1e-12, 1e-3, False)


def bench(repeat=5):
    if _kernels.compiled_integrate is None:
        raise SystemExit("compiled kernel not built; run pip install -e . --no-build-isolation")
    rows = []
    for name, (coefs, mu, x0) in CASES.items():
        w = polynomial_weight(coefs)
        times = {}
        ends = {}
        for label, fn in (("cython", _kernels.compiled_integrate),
                          ("python", _kernels.python_integrate)):
            best = np.inf
            for _ in range(repeat):
                t0 = time.perf_counter()
                xs, ys, *_ = _run(fn, w, mu, x0)
                best = min(best, time.perf_counter() - t0)
            times[label] = best
            ends[label] = np.asarray(ys)[-1]
        diff = float(np.max(np.abs(ends["cython"] - ends["python"])))
        rows.append((name, len(xs), times["cython"], times["python"],
                     times["python"] / times["cython"], diff))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'case':<10} {'steps':>6} {'cython [s]':>11} {'python [s]':>11} {'speedup':>8} "
          f"{'max |dy|':>9}")
    for name, n, tc, tp, s, d in bench(args.repeat):
        print(f"{name:<10} {n:>6d} {tc:>11.2e} {tp:>11.2e} {s:>8.1f} {d:>9.1e}")


if __name__ == "__main__":
    main()
