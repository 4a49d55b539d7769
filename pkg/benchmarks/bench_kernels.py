"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Every kernel is timed on both backends over the same inputs, and the outputs
are checked for agreement before the timings are reported.
"""

import argparse
import timeit

import numpy as np

from gnnspace import kernels
from gnnspace.graph import generate_scale_free, generate_small_world


def workloads(scale, rng):
    n_rows = int(200_000 * scale)
    seg = np.sort(rng.integers(0, n_rows // 8, n_rows))
    vals = rng.normal(size=(n_rows, 16))
    sw = generate_small_world(int(400 * scale), 6, 0.3, seed=0)
    sf = generate_scale_free(int(400 * scale), 3, 0.3, seed=0)
    x, y = rng.integers(0, 20, int(600 * scale)).astype(float), rng.normal(size=int(600 * scale))
    return {
        "segment_sum": lambda impl: kernels.segment_sum(vals, seg, n_rows // 8, impl=impl),
        "segment_max": lambda impl: kernels.segment_max(vals, seg, n_rows // 8, impl=impl),
        "bfs_distance_sum (small world)": lambda impl: kernels.bfs_distance_sum(*sw.csr, sw.n, impl=impl),
        "bfs_distance_sum (scale free)": lambda impl: kernels.bfs_distance_sum(*sf.csr, sf.n, impl=impl),
        "triangle_counts (scale free)": lambda impl: kernels.triangle_counts(*sf.csr, sf.n, impl=impl),
        "pair_counts": lambda impl: kernels.pair_counts(x, y, impl=impl),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12, atol=1e-12)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions, best is reported")
    parser.add_argument("--scale", type=float, default=1.0, help="multiplier on workload sizes")
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the python backend is available")
    rng = np.random.default_rng(0)
    names = list(backends)
    print(f"{'kernel':34s}" + "".join(f"{n + ' (ms)':>16s}" for n in names) + f"{'speedup':>10s}")
    for label, fn in workloads(args.scale, rng).items():
        outs = {n: fn(m) for n, m in backends.items()}
        if not all(_same(outs[names[0]], outs[n]) for n in names[1:]):
            raise SystemExit(f"backends disagree on {label}")
        best = {n: min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat)) * 1e3
                for n, m in backends.items()}
        speed = f"{best['python'] / best['cython']:9.1f}x" if "cython" in best else ""
        print(f"{label:34s}" + "".join(f"{best[n]:16.2f}" for n in names) + speed)


if __name__ == "__main__":
    main()
