"""Compare the compiled and pure-Python Metropolis scan kernels.

Usage::

    python benchmarks/bench_kernels.py --sizes 10000 100000 --repeat 3
"""
import argparse
import json
import time

import numpy as np

from pensemble import _scan_py

try:
    from pensemble import _scan
except ImportError:
    _scan = None


def _inputs(n, seed):
    rng = np.random.default_rng(seed)
    energies = rng.uniform(0.0, 0.3, n)
    log_u = np.log1p(-rng.random(n))
    return energies, log_u


def best_time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def run(sizes, repeat, beta_prime=20.0, seed=0):
    """Time both kernels on identical inputs and check their outputs agree."""
    rows = []
    for n in sizes:
        energies, log_u = _inputs(n, seed)
        args = (energies, log_u, beta_prime, 0.15)
        t_py, out_py = best_time(_scan_py.metropolis_scan, args, repeat)
        row = {"n": n, "python_s": t_py, "python_steps_per_s": n / t_py}
        if _scan is not None:
            t_c, out_c = best_time(_scan.metropolis_scan, args, repeat)
            same = (np.array_equal(out_py[0], out_c[0]) and np.array_equal(out_py[1], out_c[1])
                    and out_py[2] == out_c[2])
            row.update({"cython_s": t_c, "cython_steps_per_s": n / t_c,
                        "speedup": t_py / t_c, "identical": bool(same)})
        rows.append(row)
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", action="store_true", help="print rows as JSON")
    args = p.parse_args(argv)
    rows = run(args.sizes, args.repeat)
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    if _scan is None:
        print("compiled kernel not built; timing the Python fallback only")
    for r in rows:
        line = f"n={r['n']:>9d}  python {r['python_s']:.4f} s"
        if "cython_s" in r:
            line += (f"  cython {r['cython_s']:.5f} s  speedup {r['speedup']:.0f}x"
                     f"  identical={r['identical']}")
        print(line)


if __name__ == "__main__":
    main()
