"""Kernel dispatch: compiled Cython core if importable, numpy fallback otherwise.

Set ``MANIFOLD_UNLEARN_PURE=1`` before import to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py as py

BACKEND = "python"
_impl = py

if not os.environ.get("MANIFOLD_UNLEARN_PURE"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = py

jacobi_svd = _impl.jacobi_svd


def knn_select(queries, base, k):
    """Indices of the ``k`` nearest rows of ``base`` per query row
    (squared Euclidean, ties to the lower index)."""
    if not 1 <= k <= len(base):
        raise ValueError(f"k={k} must be in [1, {len(base)}]")
    return _impl.knn_select(queries, base, k)


shard_sequential_costs = _impl.shard_sequential_costs
shard_batched_costs = _impl.shard_batched_costs


def slice_costs(first_slice, n_slices, epochs, shard_size):
    """Samples seen when retraining slices ``first_slice..n_slices`` (1-based)."""
    first_slice = np.asarray(first_slice, dtype=np.int64)
    if first_slice.size and (first_slice.min() < 1 or first_slice.max() > n_slices):
        raise ValueError(f"slice indices must lie in [1, {n_slices}]")
    return _impl.slice_costs(first_slice, n_slices, epochs, shard_size)


__all__ = [
    "BACKEND",
    "jacobi_svd",
    "knn_select",
    "shard_sequential_costs",
    "shard_batched_costs",
    "slice_costs",
]
