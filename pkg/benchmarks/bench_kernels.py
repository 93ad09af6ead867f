"""Residual and Jacobian evaluation: compiled kernels vs the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 10,20,40] [--repeat 200]
"""
import argparse
import timeit

import numpy as np

from cavitysdp import _pykernels
from cavitysdp.cavity import build_system

try:
    from cavitysdp import _ckernels
except ImportError:
    _ckernels = None


def bench(mod, cs, x, repeat):
    data = mod.prepare(cs.coef, cs.term_row, cs.term_ptr, cs.fac_var, cs.fac_exp, cs.slot_nz)
    res = np.zeros(cs.n_polys)
    jac = np.zeros(len(cs.jac_rows))
    t_res = min(timeit.repeat(lambda: mod.eval_polys(data, x, res), number=repeat, repeat=3)) / repeat
    t_jac = min(timeit.repeat(lambda: mod.jac_values(data, x, jac), number=repeat, repeat=3)) / repeat
    return t_res, t_jac, res.copy(), jac.copy()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="10,20,40")
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    print(f"{'N':>4} {'n':>6} {'backend':>8} {'residual [us]':>14} {'jacobian [us]':>14}")
    for N in (int(s) for s in args.sizes.split(",")):
        cs = build_system(1000.0, 1.0, N).compiled()
        x = np.random.default_rng(N).uniform(-1, 1, cs.dimension)
        py = bench(_pykernels, cs, x, args.repeat)
        print(f"{N:>4} {cs.dimension:>6} {'numpy':>8} {py[0] * 1e6:>14.1f} {py[1] * 1e6:>14.1f}")
        if _ckernels is not None:
            cy = bench(_ckernels, cs, x, args.repeat)
            assert np.allclose(cy[2], py[2], rtol=1e-12, atol=1e-12)
            assert np.allclose(cy[3], py[3], rtol=1e-12, atol=1e-12)
            print(f"{N:>4} {cs.dimension:>6} {'cython':>8} {cy[0] * 1e6:>14.1f} {cy[1] * 1e6:>14.1f}"
                  f"   speedup {py[0] / cy[0]:.1f}x / {py[1] / cy[1]:.1f}x")
        else:
            print("     compiled extension not built")


if __name__ == "__main__":
    main()
