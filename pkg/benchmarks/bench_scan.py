"""Time the compiled selective scan against the numpy fallback.

    python3 benchmarks/bench_scan.py [--repeat 5] [--csv out.csv]

Each row is one (batch, steps, channels, state) shape; times are the best of
``--repeat`` runs of forward plus backward.
"""
import argparse
import csv
import sys
import timeit

import numpy as np

from rhythmdance import kernels

SHAPES = [(1, 48, 32, 4), (8, 48, 64, 4), (8, 192, 64, 8), (16, 256, 128, 16)]


def make_case(b, t, din, n, rng):
    return (rng.normal(size=(b, t, din)), rng.uniform(0.01, 0.5, (b, t, din)), -rng.uniform(0.1, 3.0, (din, n)),
            rng.normal(size=(b, t, n)), rng.normal(size=(b, t, n)), rng.normal(size=din))


def time_backend(impl, case, repeat):
    def step():
        y, hs = kernels.scan_forward(*case, impl=impl)
        kernels.scan_backward(np.ones_like(y), *case, hs, impl=impl)

    step()  # warm up
    return min(timeit.repeat(step, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--csv", help="also write the table as CSV")
    args = parser.parse_args(argv)
    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; only the fallback is available", file=sys.stderr)
    rng = np.random.default_rng(0)
    rows = []
    for shape in SHAPES:
        case = make_case(*shape, rng)
        times = {name: time_backend(impl, case, args.repeat) for name, impl in sorted(found.items())}
        row = {"shape": "x".join(map(str, shape)), **{f"{k}_ms": 1e3 * v for k, v in times.items()}}
        if "cython" in times:
            row["speedup"] = times["python"] / times["cython"]
        rows.append(row)
    cols = list(rows[0])
    print("  ".join(f"{c:>14}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>14.3f}" if isinstance(r[c], float) else f"{r[c]:>14}" for c in cols))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(rows)


if __name__ == "__main__":
    main()
