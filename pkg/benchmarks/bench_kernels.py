"""Compare the numba kernels with the pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [sizes...]

Both backends are called directly, so the environment flag does not matter
here.  The first numba call (compilation) is excluded from the timings.
"""

import sys
import timeit

import numpy as np

from madsse import _kernels
from madsse.grid import generate_feeder
from madsse.powerflow import _node_injections, flat_start, slack_phasors


def bench(size, multiphase, repeat=5):
    m = generate_feeder(size=size, seed=1, multiphase=multiphase)
    s = _node_injections(m, m.p_nom, m.q_nom)
    args = (np.ascontiguousarray(m.zmat), np.ascontiguousarray(m.mask), s, slack_phasors(m),
            flat_start(m), 1e-10, 100)
    topo = (m.parent, m.preorder, m.tin, m.tout)
    runs = {
        "sweep/numpy": lambda: _kernels.sweep_numpy(m.levels, m.parent, *args),
        "lca/numpy": lambda: _kernels.lca_matrix_numpy(*topo),
    }
    if _kernels.HAS_NUMBA:
        runs["sweep/numba"] = lambda: _kernels.sweep_numba(m.order, m.parent, *args)
        runs["lca/numba"] = lambda: _kernels.lca_matrix_numba(*topo)
        runs["sweep/numba"]()
        runs["lca/numba"]()
        a = _kernels.sweep_numpy(m.levels, m.parent, *args)[0]
        b = _kernels.sweep_numba(m.order, m.parent, *args)[0]
        assert np.abs(a - b).max() < 1e-9
    out = {}
    for name, fn in runs.items():
        n = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
        out[name] = min(timeit.repeat(fn, number=n, repeat=repeat)) / n
    return out


def main(argv):
    sizes = [int(x) for x in argv] or [100, 500, 2000]
    print(f"numba available: {_kernels.HAS_NUMBA}")
    print(f"{'size':>6} {'phases':>6} {'kernel':>12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for size in sizes:
        for mp in (False, True):
            r = bench(size, mp)
            for k in ("sweep", "lca"):
                a = r[f"{k}/numpy"] * 1e3
                b = r.get(f"{k}/numba", float("nan")) * 1e3
                print(f"{size:>6} {'3' if mp else '1':>6} {k:>12} {a:>10.3f} {b:>10.3f} {a / b:>8.1f}")


if __name__ == "__main__":
    main(sys.argv[1:])
