"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from manifold_unlearn import _kernels_py

try:
    from manifold_unlearn import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    a = rng.standard_normal((64, 16))
    base = rng.standard_normal((2000, 8))
    queries = rng.standard_normal((300, 8))
    hits = rng.integers(0, 20, size=(100_000, 20))
    first = rng.integers(1, 21, size=(100_000, 20)).min(axis=1)
    return {
        "jacobi_svd 64x16": lambda k: k.jacobi_svd(a, 1e-12, 200),
        "knn_select 300x2000 k=5": lambda k: k.knn_select(queries, base, 5),
        "shard_sequential 1e5x20": lambda k: k.shard_sequential_costs(hits, 50.0, 20),
        "shard_batched 1e5x20": lambda k: k.shard_batched_costs(hits, 50.0, 20),
        "slice_costs 1e5 R=20": lambda k: k.slice_costs(first, 20, 1.0, 300.0),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    backends = {"python": _kernels_py}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':28s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {}
        for b, mod in backends.items():
            fn(mod)  # warm-up
            times[b] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{name:28s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
        if len(times) == 2:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
