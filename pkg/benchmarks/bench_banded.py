"""Compare the compiled and pure-Python banded kernels.

For each series length and half-bandwidth the script times one banded
Cholesky factorization followed by a forward and a backward substitution
(the work of one Gaussian block draw) with each available backend, and
reports the median over repeats together with the speed-up.

Usage::

    python benchmarks/bench_banded.py
    python benchmarks/bench_banded.py --sizes 1000,4000 --bandwidths 2,40 --repeats 7
    python benchmarks/bench_banded.py --json results.json
"""

from __future__ import annotations

import argparse
import json
import statistics
import time

import numpy as np

from bastion.gaussian_sampler import get_kernels


def random_spd_bands(n, b, rng):
    """Band storage (``bands[j, d] = Q[j + d, j]``) of a diagonally dominant matrix."""
    bands = np.zeros((n, b + 1))
    bands[:, 1:] = rng.uniform(-1.0, 1.0, (n, b))
    for d in range(1, b + 1):
        bands[n - d:, d] = 0.0
    bands[:, 0] = 2.0 * b + 1.0
    return bands


def time_backend(kern, bands, rhs, repeats):
    """Median seconds of factor + forward + backward solve."""
    samples = []
    for _ in range(repeats):
        work = bands.copy()
        x = rhs.copy()
        start = time.perf_counter()
        info = kern.cholesky_banded_inplace(work)
        kern.forward_solve_inplace(work, x)
        kern.backward_solve_inplace(work, x)
        samples.append(time.perf_counter() - start)
        if info >= 0:
            raise RuntimeError(f"factorization failed at pivot {info}")
    return statistics.median(samples), x


def available_backends():
    out = {}
    for name in ("cython", "python"):
        try:
            out[name] = get_kernels(name)
        except ImportError:
            pass
    return out


def run(sizes, bandwidths, repeats, seed=0):
    rng = np.random.default_rng(seed)
    backends = available_backends()
    rows = []
    for b in bandwidths:
        for n in sizes:
            bands = random_spd_bands(n, b, rng)
            rhs = rng.normal(size=n)
            row = {"n": n, "bandwidth": b}
            solutions = {}
            for name, kern in backends.items():
                row[name], solutions[name] = time_backend(kern, bands, rhs, repeats)
            if len(solutions) == 2:
                row["max_abs_diff"] = float(np.max(np.abs(solutions["cython"] - solutions["python"])))
                row["speedup"] = row["python"] / row["cython"]
            rows.append(row)
    return rows, list(backends)


def format_table(rows, names):
    head = f"{'N':>8} {'b':>4} " + " ".join(f"{n + ' [ms]':>14}" for n in names)
    if len(names) == 2:
        head += f" {'speed-up':>9} {'max |diff|':>11}"
    lines = [head, "-" * len(head)]
    for r in rows:
        line = f"{r['n']:>8} {r['bandwidth']:>4} " + " ".join(f"{1e3 * r[n]:>14.3f}" for n in names)
        if "speedup" in r:
            line += f" {r['speedup']:>9.1f} {r['max_abs_diff']:>11.2e}"
        lines.append(line)
    return "\n".join(lines)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="500,1000,2000,4000,8000",
                        help="comma-separated series lengths")
    parser.add_argument("--bandwidths", default="2,12,40", help="comma-separated half-bandwidths")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="also write the results to this file")
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    bandwidths = [int(b) for b in args.bandwidths.split(",")]
    rows, names = run(sizes, bandwidths, args.repeats, args.seed)
    print(format_table(rows, names))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"backends": names, "results": rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
