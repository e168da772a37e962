"""Compiled vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 1000000]

Each row is the best of ``--repeat`` runs.  The SIREN forward pass is timed by
patching the backend, since it calls the sine kernel internally.
"""

import argparse
import timeit

import numpy as np

from fdsdf import kernels, oracles, siren


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=1_000_000, help="array length for the trig kernels")
    ap.add_argument("--points", type=int, default=100_000, help="queries for nearest neighbour")
    args = ap.parse_args()

    if kernels.BACKEND != "compiled":
        raise SystemExit("compiled extension not built; run `python setup.py build_ext --inplace`")

    rng = np.random.default_rng(0)
    z = rng.uniform(-30, 30, args.n)
    # surface samples, as in the metrics; the grid is sized for 2-manifold sets
    ref = oracles.Torus(0.6, 0.2).sample_surface(args.points, rng)
    q = oracles.Torus(0.6, 0.2).sample_surface(args.points, rng) + rng.normal(0, 0.005, ref.shape)
    grid = kernels.GridIndex(ref)
    params = siren.init(0, 64, 3, 4.0)
    x = rng.uniform(-1, 1, (200_000, 3))

    cases = {
        f"sincos  n={args.n}": lambda b: kernels.sincos(z, backend=b),
        f"sin     n={args.n}": lambda b: kernels.sin(z, backend=b),
        f"nearest n={args.points}": lambda b: grid.query(q, backend=b),
    }
    print(f"{'kernel':<26}{'python [ms]':>12}{'compiled [ms]':>15}{'speed-up':>10}")
    for name, fn in cases.items():
        tp = best(lambda: fn("python"), args.repeat)
        tc = best(lambda: fn("compiled"), args.repeat)
        print(f"{name:<26}{1e3 * tp:12.1f}{1e3 * tc:15.1f}{tp / tc:10.2f}")

    times = {}
    for b in ("python", "compiled"):
        kernels.BACKEND = b
        times[b] = best(lambda: siren.forward(params, x), args.repeat)
    kernels.BACKEND = "compiled"
    tp, tc = times["python"], times["compiled"]
    print(f"{'siren forward n=200000':<26}{1e3 * tp:12.1f}{1e3 * tc:15.1f}{tp / tc:10.2f}")


if __name__ == "__main__":
    main()
