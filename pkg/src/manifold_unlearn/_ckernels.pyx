# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``.

Signatures and return conventions are identical; see that module for the
reference semantics.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def jacobi_svd(a, double eps, int max_sweeps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] w_arr = np.array(a, dtype=np.float64, order="F", copy=True)
    cdef Py_ssize_t m = w_arr.shape[0]
    cdef Py_ssize_t n = w_arr.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v_arr = np.eye(n, order="F")
    cdef double[::1, :] w = w_arr
    cdef double[::1, :] v = v_arr
    cdef Py_ssize_t i, j, r
    cdef int sweep
    cdef bint rotated
    cdef double alpha, beta, gamma, zeta, t, c, s, x, y
    cdef double floor = 0.0
    for i in range(n):
        for r in range(m):
            floor += w[r, i] * w[r, i]
    floor = eps * eps * floor
    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for r in range(m):
                    alpha += w[r, i] * w[r, i]
                    beta += w[r, j] * w[r, j]
                    gamma += w[r, i] * w[r, j]
                if alpha <= floor or beta <= floor:
                    continue
                if gamma == 0.0 or fabs(gamma) <= eps * sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for r in range(m):
                    x = w[r, i]
                    y = w[r, j]
                    w[r, i] = c * x - s * y
                    w[r, j] = s * x + c * y
                for r in range(n):
                    x = v[r, i]
                    y = v[r, j]
                    v[r, i] = c * x - s * y
                    v[r, j] = s * x + c * y
        if not rotated:
            return w_arr, v_arr, sweep + 1
    return w_arr, v_arr, -1


def knn_select(queries, base, Py_ssize_t k):
    cdef double[:, ::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef Py_ssize_t nq = q.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    cdef Py_ssize_t dim = q.shape[1]
    out_arr = np.empty((nq, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef double[::1] best = np.empty(k, dtype=np.float64)
    cdef Py_ssize_t qi, bj, d, pos, filled
    cdef double acc, diff
    for qi in range(nq):
        filled = 0
        for bj in range(nb):
            acc = 0.0
            for d in range(dim):
                diff = q[qi, d] - b[bj, d]
                acc += diff * diff
            if filled == k and acc >= best[k - 1]:
                continue
            # insertion keeps earlier indices ahead of later equal distances
            pos = filled if filled < k else k - 1
            while pos > 0 and best[pos - 1] > acc:
                if pos < k:
                    best[pos] = best[pos - 1]
                    out[qi, pos] = out[qi, pos - 1]
                pos -= 1
            best[pos] = acc
            out[qi, pos] = bj
            if filled < k:
                filled += 1
    return out_arr


def shard_sequential_costs(hits, double shard_size, Py_ssize_t n_shards):
    cdef cnp.int64_t[:, ::1] h = np.ascontiguousarray(hits, dtype=np.int64)
    cdef Py_ssize_t trials = h.shape[0]
    cdef Py_ssize_t k = h.shape[1]
    out_arr = np.empty(trials, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cnp.int64_t[::1] counts = np.zeros(n_shards, dtype=np.int64)
    cdef Py_ssize_t tr, i, s
    cdef double cost
    for tr in range(trials):
        for s in range(n_shards):
            counts[s] = 0
        cost = 0.0
        for i in range(k):
            s = h[tr, i]
            cost += shard_size - 1.0 - counts[s]
            counts[s] += 1
        out[tr] = cost
    return out_arr


def shard_batched_costs(hits, double shard_size, Py_ssize_t n_shards):
    cdef cnp.int64_t[:, ::1] h = np.ascontiguousarray(hits, dtype=np.int64)
    cdef Py_ssize_t trials = h.shape[0]
    cdef Py_ssize_t k = h.shape[1]
    out_arr = np.empty(trials, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cnp.int64_t[::1] counts = np.zeros(n_shards, dtype=np.int64)
    cdef Py_ssize_t tr, i, s
    cdef double cost
    for tr in range(trials):
        for s in range(n_shards):
            counts[s] = 0
        for i in range(k):
            counts[h[tr, i]] += 1
        cost = 0.0
        for s in range(n_shards):
            if counts[s] > 0:
                cost += shard_size - counts[s]
        out[tr] = cost
    return out_arr


def slice_costs(first_slice, Py_ssize_t n_slices, double epochs, double shard_size):
    cdef cnp.int64_t[::1] r = np.ascontiguousarray(first_slice, dtype=np.int64)
    cdef Py_ssize_t trials = r.shape[0]
    out_arr = np.empty(trials, dtype=np.float64)
    cdef double[::1] out = out_arr
    suffix_arr = np.empty(n_slices + 1, dtype=np.float64)
    cdef double[::1] suffix = suffix_arr
    cdef Py_ssize_t tr, j
    cdef double acc = 0.0
    # suffix[r] = sum_{j=r}^{R} cost of slice j, accumulated from R downward
    for j in range(n_slices, 0, -1):
        acc += (2.0 * epochs / (n_slices + 1)) * (j * shard_size / n_slices)
        suffix[j] = acc
    for tr in range(trials):
        out[tr] = suffix[r[tr]]
    return out_arr
