"""Time the numba kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from occuplan import _kernels
from occuplan.polyalg import basis_exponents


def cases():
    rng = np.random.default_rng(0)
    for n, d, pts in ((2, 8, 2000), (4, 6, 2000), (6, 4, 5000)):
        exps = np.asarray(basis_exponents(n, d))
        points = rng.uniform(-1, 1, (pts, n))
        weights = rng.uniform(0, 1, pts)
        yield f"n={n} d={d} pts={pts}", exps, points, weights


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        print("numba not installed; nothing to compare")
        return
    impls = {"numpy": _kernels.numpy_impl, "numba": _kernels.numba_impl}
    print(f"{'case':24s} {'kernel':18s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for label, exps, points, weights in cases():
        calls = {
            "glex_rank": lambda k: k.glex_rank(exps),
            "monomial_eval": lambda k: k.monomial_eval(points, exps),
            "weighted_moments": lambda k: k.weighted_moments(points, weights, exps),
        }
        for name, call in calls.items():
            call(impls["numba"])  # compile outside the timing
            t = {
                key: min(timeit.repeat(lambda: call(k), number=1, repeat=args.repeat)) * 1e3
                for key, k in impls.items()
            }
            print(f"{label:24s} {name:18s} {t['numpy']:11.3f} {t['numba']:11.3f} {t['numpy'] / t['numba']:8.1f}")


if __name__ == "__main__":
    main()
