"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Prints one line per kernel with the best wall time of each backend and the
speedup; the compiled column is blank when the extension is not built.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from cocyclelab import kernels


def cases():
    rng = np.random.default_rng(0)
    A3 = np.eye(3) + 0.3 * rng.normal(size=(100_000, 3, 3))
    A2 = np.eye(2) + 0.3 * rng.normal(size=(200, 2, 2))
    C = np.eye(6) + 0.3 * rng.normal(size=(50_000, 6, 6))
    P = rng.random((4, 4))
    cum = np.cumsum(P / P.sum(axis=1, keepdims=True), axis=1)
    u = rng.random(1_000_000)
    L = np.array([[2.0, 1.0], [1.0, 1.0]])
    U2, E2 = kernels._kernels_py.cumprod_scaled(A2)
    v = rng.normal(size=6)
    return {
        "cumprod_scaled (n=1e5, m=3)": lambda b: b.cumprod_scaled(A3),
        "qr_accumulate (n=1e5, m=3)": lambda b: b.qr_accumulate(A3, 100),
        "power_growth (n=5e4, 6x6)": lambda b: b.power_growth(C, v, 50),
        "markov_chain (n=1e6, k=4)": lambda b: b.markov_chain(cum, u, 0),
        "toral_orbit (n=1e6)": lambda b: b.toral_orbit(L, np.array([0.1, 0.2]), 1_000_000),
        "identity_residual (n=200, m=2)": lambda b: b.identity_residual(A2, U2, E2),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write results here")
    args = ap.parse_args(argv)
    backends = {b.BACKEND: b for b in kernels.available_backends()}
    py, cy = backends["python"], backends.get("cython")
    rows = []
    print(f"{'kernel':34s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for name, fn in cases().items():
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3 if cy else None
        sp = tp / tc if tc else None
        rows.append({"kernel": name, "python_ms": tp, "compiled_ms": tc, "speedup": sp})
        print(f"{name:34s} {tp:12.2f} {tc if tc else float('nan'):14.2f} "
              f"{sp if sp else float('nan'):8.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
