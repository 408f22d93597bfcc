"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [-N 200]

Times ``expm_pade`` on the 13x13 Example 1 flow matrix, one ``propagate``
call over a 40 s path, and a full Monte Carlo ensemble with each backend.
"""
import argparse
import timeit

import numpy as np

from stochreg import _fallback, pdmp, verify
from stochreg import pipeline as pl
from stochreg.io import load_example

try:
    from stochreg import _kernels
except ImportError:
    _kernels = None


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def with_backend(mod, fn):
    saved = (pdmp.kernels.expm_pade, pdmp.kernels.propagate)
    pdmp.kernels.expm_pade, pdmp.kernels.propagate = mod.expm_pade, mod.propagate
    try:
        return fn()
    finally:
        pdmp.kernels.expm_pade, pdmp.kernels.propagate = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("-N", type=int, default=200)
    args = ap.parse_args(argv)

    cfg = load_example("example1")
    design = pl.synthesize(cfg, gamma=0.1, lam=2.0)
    cl = pl.closed_loop(cfg, design.regulator, design.front)
    x0 = pdmp.transform_state(cl, pl.initial_state(cfg, cl))
    F, J = cl.F_tr, cl.J_tr
    grid = pdmp.output_grid(40.0, 0.05)
    jumps = pdmp.sample_intervals(2.0, 40.0, 1)
    phi = _fallback.expm_pade(F * 0.05)

    backends = [("python", _fallback)] + ([("cython", _kernels)] if _kernels else [])
    rows = []
    for name, mod in backends:
        t_expm = best(lambda: mod.expm_pade(F * 0.37), args.repeat, 200)
        t_prop = best(lambda: mod.propagate(F, J, x0, jumps, grid, phi, 0.05), args.repeat, 5)
        t_mc = with_backend(mod, lambda: best(
            lambda: verify.monte_carlo_moment(cl, x0, args.N, 40.0, 0.05, 2.0, 1,
                                              x0_coords="transformed"), 1, 1))
        rows.append((name, t_expm, t_prop, t_mc))

    print(f"{'backend':<8} {'expm [us]':>10} {'propagate [ms]':>15} {'ensemble N=' + str(args.N) + ' [s]':>20}")
    for name, a, b, c in rows:
        print(f"{name:<8} {a * 1e6:>10.1f} {b * 1e3:>15.2f} {c:>20.3f}")
    if len(rows) == 2:
        (_, a0, b0, c0), (_, a1, b1, c1) = rows
        print(f"speedup  {a0 / a1:>10.1f}x {b0 / b1:>14.1f}x {c0 / c1:>19.1f}x")
        s0 = _fallback.propagate(F, J, x0, jumps, grid, phi, 0.05)[0]
        s1 = _kernels.propagate(F, J, x0, jumps, grid, phi, 0.05)[0]
        print(f"max state difference between backends: {np.abs(s0 - s1).max():.2e}")


if __name__ == "__main__":
    main()
