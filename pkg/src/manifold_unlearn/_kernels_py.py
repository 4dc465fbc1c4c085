"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` argument for argument and are used whenever
the compiled module is missing or ``MANIFOLD_UNLEARN_PURE=1`` is set.
"""
import numpy as np

_KNN_CHUNK = 256


def jacobi_svd(a, eps, max_sweeps):
    """One-sided (Hestenes) Jacobi on the columns of ``a``.

    Returns ``(w, v, sweeps)`` where the columns of ``w`` are mutually
    orthogonal, ``a @ v == w`` and ``sweeps`` is -1 if ``max_sweeps`` was
    exhausted before convergence. Columns whose squared norm falls to
    ``(eps * ||a||_F)**2`` count as numerically zero and are left alone,
    otherwise a rank-deficient input keeps rotating rounding noise.
    """
    w = np.array(a, dtype=np.float64, order="F", copy=True)
    n = w.shape[1]
    v = np.eye(n)
    floor = (eps * float(np.sqrt((w * w).sum()))) ** 2
    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                wi = w[:, i]
                wj = w[:, j]
                alpha = float(wi @ wi)
                beta = float(wj @ wj)
                gamma = float(wi @ wj)
                if alpha <= floor or beta <= floor:
                    continue
                if gamma == 0.0 or abs(gamma) <= eps * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                wi_old = wi.copy()
                w[:, i] = c * wi_old - s * wj
                w[:, j] = s * wi_old + c * wj
                vi_old = v[:, i].copy()
                v[:, i] = c * vi_old - s * v[:, j]
                v[:, j] = s * vi_old + c * v[:, j]
        if not rotated:
            return w, v, sweep + 1
    return w, v, -1


def _sq_dists(queries, base):
    # accumulate dimension by dimension so rounding matches the compiled loop
    d2 = np.zeros((queries.shape[0], base.shape[0]))
    for d in range(queries.shape[1]):
        diff = queries[:, d, None] - base[None, :, d]
        d2 += diff * diff
    return d2


def knn_select(queries, base, k):
    """Indices of the ``k`` nearest rows of ``base`` for each query row.

    Ordered by squared Euclidean distance, ties going to the lower index.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    base = np.ascontiguousarray(base, dtype=np.float64)
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for lo in range(0, queries.shape[0], _KNN_CHUNK):
        d2 = _sq_dists(queries[lo:lo + _KNN_CHUNK], base)
        out[lo:lo + _KNN_CHUNK] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def shard_sequential_costs(hits, shard_size, n_shards):
    """Per-trial cost of serving requests one at a time.

    ``hits`` is (trials, K); request i on shard s costs
    ``shard_size - 1 - (earlier hits on s)``.
    """
    hits = np.asarray(hits, dtype=np.int64)
    trials, k = hits.shape
    counts = np.zeros((trials, n_shards), dtype=np.int64)
    rows = np.repeat(np.arange(trials), k)
    np.add.at(counts, (rows, hits.ravel()), 1)
    prior = (counts * (counts - 1) // 2).sum(axis=1)
    return k * (shard_size - 1.0) - prior


def shard_batched_costs(hits, shard_size, n_shards):
    """Per-trial cost of one batched retrain: each hit shard retrains once
    on its remaining ``shard_size - u_j`` points."""
    hits = np.asarray(hits, dtype=np.int64)
    trials, k = hits.shape
    touched = np.zeros((trials, n_shards), dtype=bool)
    touched[np.repeat(np.arange(trials), k), hits.ravel()] = True
    return touched.sum(axis=1) * shard_size - k


def slice_costs(first_slice, n_slices, epochs, shard_size):
    """Samples seen when retraining slices ``first_slice..n_slices`` (1-based)."""
    first_slice = np.asarray(first_slice, dtype=np.int64)
    per_slice = np.array(
        [(2.0 * epochs / (n_slices + 1)) * (j * shard_size / n_slices) for j in range(1, n_slices + 1)]
    )
    # suffix[r-1] = sum_{j=r}^{R} per_slice[j-1]
    suffix = np.cumsum(per_slice[::-1])[::-1]
    return suffix[first_slice - 1]
