"""Nuclear-norm capacity regulariser on normalised class centroids."""
from __future__ import annotations

import logging

import numpy as np

from . import _kernels

log = logging.getLogger(__name__)

# relative orthogonality threshold; comfortably above rounding noise so the
# sweep loop terminates, and far below the 1e-10 accuracy asked of sigma
JACOBI_EPS = 1e-12
MAX_SWEEPS = 200
RANK_TOL = 1e-8


class ConvergenceError(RuntimeError):
    pass


def svd_jacobi(m, eps=JACOBI_EPS, max_sweeps=MAX_SWEEPS):
    """Thin SVD ``m = u @ diag(s) @ v.T`` by one-sided Jacobi rotations.

    Singular values are returned nonincreasing, ``min(rows, cols)`` of them.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = m.shape
    # rotate the narrower side so at most min(rows, cols) columns survive
    transposed = cols > rows
    a = m.T if transposed else m
    w, v, sweeps = _kernels.jacobi_svd(a, eps, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    s = np.linalg.norm(w, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    v = v[:, order]
    u = np.zeros_like(w)
    nz = s > 0
    u[:, nz] = w[:, order][:, nz] / s[nz]
    if transposed:
        u, v = v, u
    return u, s, v


def singular_values(m) -> np.ndarray:
    return svd_jacobi(m)[1]


def nuclear_norm(m) -> float:
    return float(singular_values(m).sum())


NORMALIZE = ("centroid", "sample")


def centroid_matrix(groups):
    """Columns are the L2-normalised means of each group; also returns the raw means."""
    means = []
    for i, g in enumerate(groups):
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        if g.shape[0] == 0:
            raise ValueError(f"group {i} is empty")
        means.append(g.mean(axis=0))
    means = np.stack(means, axis=1)
    norms = np.linalg.norm(means, axis=0)
    if np.any(norms == 0):
        raise ValueError("a group centroid is the zero vector and cannot be normalised")
    return means / norms, means, norms


def _unit_rows(g):
    """Rows projected to the unit sphere; an all-zero row has no direction
    and maps to zero (its gradient is zeroed by the caller)."""
    norms = np.linalg.norm(g, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms[:, None] > 0, g / safe[:, None], 0.0), safe


def mmcr_regularizer(groups, lam, normalize="centroid"):
    """Return ``-lam * ||C||_*`` and its gradient w.r.t. each group's representations.

    With ``normalize="centroid"`` the columns of ``C`` are the L2-normalised
    group means. With ``normalize="sample"`` every representation is first
    projected to the unit sphere and the columns are the plain means of
    those unit vectors, so a column is long only when its group is tight.
    The nuclear-norm subgradient ``U V^T`` keeps only singular directions
    above a relative ``1e-8`` floor.
    """
    if normalize not in NORMALIZE:
        raise ValueError(f"normalize must be one of {NORMALIZE}")
    groups = [np.atleast_2d(np.asarray(g, dtype=np.float64)) for g in groups]
    if lam == 0:
        return 0.0, [np.zeros_like(g) for g in groups]
    if normalize == "sample":
        for i, g in enumerate(groups):
            if g.shape[0] == 0:
                raise ValueError(f"group {i} is empty")
        units = [_unit_rows(g) for g in groups]
        c = np.stack([un.mean(axis=0) for un, _ in units], axis=1)
        u, s, v = svd_jacobi(c)
        keep = s > RANK_TOL * max(s[0], 1.0)
        d_c = -lam * (u[:, keep] @ v[:, keep].T)
        grads = []
        for j, (un, rn) in enumerate(units):
            d_unit = d_c[:, j][None, :] / un.shape[0]
            # d(z/|z|) = (I - zhat zhat^T) / |z|
            grads.append((d_unit - un * (un @ d_c[:, j])[:, None] / un.shape[0]) / rn[:, None])
            grads[-1][~un.any(axis=1)] = 0.0
        return float(-lam * s.sum()), grads
    c, means, norms = centroid_matrix(groups)
    u, s, v = svd_jacobi(c)
    keep = s > RANK_TOL * max(s[0], 1.0)
    if keep.sum() > 1:
        gaps = -np.diff(s[keep])
        if np.any(gaps < RANK_TOL):
            log.debug("near-repeated singular values %s; nuclear-norm subgradient is not unique", s[keep])
    d_c = -lam * (u[:, keep] @ v[:, keep].T)
    grads = []
    for j, g in enumerate(groups):
        cj = c[:, j]
        # d(mu/|mu|) = (I - c c^T) / |mu|
        d_mean = (d_c[:, j] - cj * (cj @ d_c[:, j])) / norms[j]
        grads.append(np.repeat(d_mean[None, :] / g.shape[0], g.shape[0], axis=0))
    return float(-lam * s.sum()), grads


def mmcr_objective(labels, lam, normalize="centroid"):
    """Loss functional adding the regulariser over the classes present in a batch."""
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)

    def loss(fr):
        reps = fr.representation
        groups = [reps[labels == c] for c in classes]
        value, grads = mmcr_regularizer(groups, lam, normalize)
        d = np.zeros_like(reps)
        for c, g in zip(classes, grads):
            d[labels == c] = g
        return value, d, None

    return loss


def separability_ratio(reps, labels) -> float:
    """Mean pairwise distance between class centroids over mean intra-class radius."""
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    cents = np.stack([reps[labels == c].mean(axis=0) for c in classes])
    radius = np.mean([np.linalg.norm(reps[labels == c] - cents[i], axis=1).mean() for i, c in enumerate(classes)])
    iu = np.triu_indices(len(classes), 1)
    pair = np.linalg.norm(cents[:, None, :] - cents[None, :, :], axis=2)[iu]
    return float(pair.mean() / radius)
