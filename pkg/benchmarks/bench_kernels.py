"""Compiled vs pure-numpy pair kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 256 1024 2048] [--repeat 3]

For every (d, N) prints the best-of-repeat wall time of a full force plus
potential evaluation for each backend, the speedup, and the largest
disagreement between the two.
"""

import argparse
import time

import numpy as np

from eulerlimit import _backend, _fallback
from eulerlimit.green import GreenKernel


def _run(mod, kernel, x, want_pot):
    gr, pr, _, _ = mod.real_space_sums(x, kernel._shifts, kernel.ewald_split, kernel.real_cutoff**2, want_pot)
    gf, pf = mod.fourier_sums(x, kernel._modes, kernel._coef, kernel.fourier_cutoff, want_pot)
    return gr + gf, float(np.sum(pr)) + pf


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 2048])
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--no-potential", action="store_true")
    args = ap.parse_args()

    backends = _backend.available()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    want_pot = not args.no_potential
    print(f"{'d':>2} {'N':>6} {'numpy [s]':>10} {'compiled [s]':>13} {'speedup':>8} {'max |dgrad|':>12} {'|dpot|':>10}")
    for d in args.dims:
        kernel = GreenKernel(d)
        for n in args.sizes:
            x = np.random.default_rng(n).random((n, d)) - 0.5
            t_py, (g_py, p_py) = _best(lambda: _run(_fallback, kernel, x, want_pot), args.repeat)
            if "compiled" in backends:
                t_c, (g_c, p_c) = _best(lambda: _run(backends["compiled"], kernel, x, want_pot), args.repeat)
                dg = float(np.max(np.abs(g_py - g_c)))
                dp = abs(p_py - p_c)
                print(f"{d:>2} {n:>6} {t_py:>10.3f} {t_c:>13.3f} {t_py / t_c:>8.1f} {dg:>12.2e} {dp:>10.2e}")
            else:
                print(f"{d:>2} {n:>6} {t_py:>10.3f} {'-':>13} {'-':>8} {'-':>12} {'-':>10}")


if __name__ == "__main__":
    main()
