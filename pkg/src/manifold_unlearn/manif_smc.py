"""Representation-space unlearning with a self-mode-connectivity margin.

Erased samples are pushed away from their cached original representation
and pulled toward the centroid of their retained neighbours through a
hinge (triplet) loss. The per-sample margin and the centroid come from a
surrogate model sampled on a quadratic Bezier path between the current
unlearned parameters and the original ones; the path's control point is
fitted on the retained neighbourhood only.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import losses
from .nn import EncoderSpec, forward, gradient, init_params, representations, sgd_step

log = logging.getLogger(__name__)

METRICS = ("euclidean", "squared_euclidean", "cosine")


def _check_metric(metric):
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")


def dist_rows(z, t, metric="euclidean"):
    """Row-wise distances between ``z`` and ``t`` and their gradient w.r.t. ``z``."""
    _check_metric(metric)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    t = np.atleast_2d(np.asarray(t, dtype=np.float64))
    if z.shape != t.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {t.shape}")
    if metric == "squared_euclidean":
        diff = z - t
        return (diff * diff).sum(axis=1), 2.0 * diff
    if metric == "euclidean":
        diff = z - t
        d = np.sqrt((diff * diff).sum(axis=1))
        safe = np.where(d > 0, d, 1.0)
        # subgradient 0 where z == t
        g = np.where(d[:, None] > 0, diff / safe[:, None], 0.0)
        return d, g
    nz = np.linalg.norm(z, axis=1)
    nt = np.linalg.norm(t, axis=1)
    if np.any(nz == 0) or np.any(nt == 0):
        raise ValueError("cosine distance is undefined for zero vectors")
    dot = (z * t).sum(axis=1)
    d = 1.0 - dot / (nz * nt)
    g = -(t / (nz * nt)[:, None] - (dot / (nz ** 3 * nt))[:, None] * z)
    return d, g


def dist(a, b, metric="euclidean") -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape} vs {b.shape}")
    return float(dist_rows(a, b, metric)[0][0])


def centroid(spec: EncoderSpec, params, neighbor_inputs) -> np.ndarray:
    neighbor_inputs = np.atleast_2d(np.asarray(neighbor_inputs, dtype=np.float64))
    if neighbor_inputs.shape[0] == 0:
        raise ValueError("centroid of an empty neighbour set")
    return representations(spec, params, neighbor_inputs).mean(axis=0)


def neighbor_centroids(spec, params, split) -> np.ndarray:
    """Centroid of every erased sample's neighbour set under ``params``, shape (uss, D)."""
    union = split.neighbor_union
    reps = representations(spec, params, split.train.inputs[union])
    pos = np.searchsorted(union, split.neighbor_sets)
    return reps[pos].mean(axis=1)


def push_pull_objectives(spec, params, split, metric="squared_euclidean"):
    """Diagnostic push (distance from original reps) and pull (distance to
    neighbour centroids under the same params) sums."""
    z = representations(spec, params, split.train.inputs[split.erased])
    c = neighbor_centroids(spec, params, split)
    push = dist_rows(z, split.original_reps, metric)[0].sum()
    pull = dist_rows(z, c, metric)[0].sum()
    return float(push), float(pull)


def _per_sample(values, erased, name):
    """Accept a scalar, an array aligned with ``erased`` or a mapping keyed by erased index."""
    n = len(erased)
    if isinstance(values, dict):
        missing = [int(i) for i in erased if int(i) not in values]
        if missing:
            raise KeyError(f"{name} missing for erased indices {missing[:5]}")
        return np.asarray([values[int(i)] for i in erased], dtype=np.float64)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if len(arr) != n:
        raise KeyError(f"{name} covers {len(arr)} samples, expected {n}")
    return arr


def triplet_hinge(reps, targets, z_o, margins, metric="euclidean"):
    """Per-sample ``[d(z, target) - d(z, z_o) + margin]_+`` and its gradient w.r.t. ``reps``."""
    d_c, g_c = dist_rows(reps, targets, metric)
    d_z, g_z = dist_rows(reps, z_o, metric)
    raw = d_c - d_z + margins
    active = raw > 0
    return np.where(active, raw, 0.0), np.where(active[:, None], g_c - g_z, 0.0)


def triplet_objective(x, z_o, targets, margins, metric="euclidean"):
    """Loss functional for :func:`nn.gradient`: summed hinge over a batch."""

    def loss(fr):
        terms, g = triplet_hinge(fr.representation, targets, z_o, margins, metric)
        return terms.sum(), g, None

    return loss


def triplet_loss(spec, params, split, metric, margins, targets) -> float:
    """Summed triplet hinge over the erased set of ``split``.

    ``margins`` and ``targets`` may be aligned arrays or mappings keyed by
    erased dataset index.
    """
    erased = split.erased
    alpha = _per_sample(margins, erased, "margins")
    if isinstance(targets, dict):
        missing = [int(i) for i in erased if int(i) not in targets]
        if missing:
            raise KeyError(f"targets missing for erased indices {missing[:5]}")
        tgt = np.asarray([targets[int(i)] for i in erased], dtype=np.float64)
    else:
        tgt = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if len(tgt) != len(erased):
            raise KeyError(f"targets cover {len(tgt)} samples, expected {len(erased)}")
    if np.any(alpha < 0):
        raise ValueError("margins must be nonnegative")
    z = representations(spec, params, split.train.inputs[erased])
    terms, _ = triplet_hinge(z, tgt, split.original_reps, alpha, metric)
    return float(terms.sum())


@dataclass
class BezierPath:
    theta_u: np.ndarray
    w: np.ndarray
    theta_o: np.ndarray

    def __post_init__(self):
        self.theta_u = np.asarray(self.theta_u, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        self.theta_o = np.asarray(self.theta_o, dtype=np.float64)
        if not (self.theta_u.shape == self.w.shape == self.theta_o.shape):
            raise ValueError("path endpoints and control point must have equal length")


def bezier_point(path: BezierPath, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    # exact endpoints, independent of rounding in the blend
    if t == 0.0:
        return path.theta_u.copy()
    if t == 1.0:
        return path.theta_o.copy()
    s = 1.0 - t
    return s * s * path.theta_u + 2.0 * t * s * path.w + t * t * path.theta_o


def train_control_point(path: BezierPath, objective: Callable, steps: int, path_lr: float, rng, history=None) -> BezierPath:
    """SGD on the control point only.

    ``objective(theta, step) -> (loss, grad)`` is the retained loss at a point
    on the path; the control-point gradient is ``2 t (1 - t) * grad``.
    """
    rng = np.random.default_rng(rng)
    w = path.w.copy()
    for step in range(steps):
        t = float(rng.uniform(0.0, 1.0))
        theta_t = bezier_point(BezierPath(path.theta_u, w, path.theta_o), t)
        value, g = objective(theta_t, step)
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite path loss at step {step}")
        w = w - path_lr * (2.0 * t * (1.0 - t)) * g
        if history is not None:
            history.append(float(value))
    return BezierPath(path.theta_u, w, path.theta_o)


def retained_objective(spec, inputs, targets, batch_size, seed, loss="distill"):
    """Minibatch retained loss over the neighbourhood data.

    ``loss="distill"`` matches current representations to ``targets`` (the
    cached original representations); ``loss="cross_entropy"`` treats
    ``targets`` as class labels. Batches cycle through a seeded order.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    n = len(inputs)
    order = np.random.default_rng(seed).permutation(n)
    batch_size = max(1, min(batch_size, n))
    n_batches = -(-n // batch_size)

    def objective(theta, step):
        b = step % n_batches
        idx = order[b * batch_size:(b + 1) * batch_size]
        if loss == "distill":
            fn = losses.representation_mse(targets[idx])
        elif loss == "cross_entropy":
            fn = losses.cross_entropy(targets[idx])
        else:
            raise ValueError(f"unknown path loss {loss!r}")
        return gradient(spec, theta, inputs[idx], fn)

    return objective


def adaptive_margin(spec, theta_tilde, x_i, z_io, c_tilde, metric="euclidean") -> float:
    rep = representations(spec, theta_tilde, np.asarray(x_i, dtype=np.float64))
    return max(dist(rep, z_io, metric) - dist(rep, c_tilde, metric), 0.0)


def adaptive_margins(reps_tilde, z_o, c_tilde, metric="euclidean") -> np.ndarray:
    d_z, _ = dist_rows(reps_tilde, z_o, metric)
    d_c, _ = dist_rows(reps_tilde, c_tilde, metric)
    return np.maximum(d_z - d_c, 0.0)


def logit_drift_bound(path: BezierPath, t_star: float, lipschitz: float) -> float:
    """Upper bound on ``|g(path(t_star), x) - g(theta_o, x)|`` for an
    ``lipschitz``-Lipschitz output map."""
    if lipschitz <= 0:
        raise ValueError("lipschitz constant must be positive")
    if not 0.0 <= t_star <= 1.0:
        raise ValueError(f"t_star={t_star} outside [0, 1]")
    s = 1.0 - t_star
    return float(
        lipschitz
        * (s * s * np.linalg.norm(path.theta_u - path.theta_o) + 2.0 * t_star * s * np.linalg.norm(path.w - path.theta_o))
    )


def estimate_lipschitz(spec, params, probes, scale, samples, rng, aligned=True) -> float:
    """Empirical Lipschitz constant of the network output in parameter space.

    Maximum over sampled perturbations ``delta`` (norm ``scale``) of
    ``max_x ||g(params + delta, x) - g(params, x)||_inf / ||delta||_2``.
    Candidates are ``samples`` random directions plus, when ``aligned``,
    the gradient direction of every output coordinate at every probe.
    Being a maximum over samples, this is a lower estimate of the true
    constant.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng)
    params = np.asarray(params, dtype=np.float64)
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    base = forward(spec, params, probes).output
    dirs = [rng.standard_normal(params.size) for _ in range(samples)]
    if aligned:
        for x in probes:
            for j in range(base.shape[1]):
                def pick(fr, j=j):
                    out = fr.output
                    d = np.zeros_like(out)
                    d[:, j] = 1.0
                    if fr.logits is not None:
                        return out[:, j].sum(), None, d
                    return out[:, j].sum(), d, None

                _, g = gradient(spec, params, x[None, :], pick)
                if np.linalg.norm(g) > 0:
                    dirs.append(g)
    best = 0.0
    for d in dirs:
        norm = np.linalg.norm(d)
        if norm == 0:
            continue
        delta = d * (scale / norm)
        moved = forward(spec, params + delta, probes).output
        ratio = np.abs(moved - base).max() / np.linalg.norm(delta)
        best = max(best, float(ratio))
    return best


@dataclass
class UnlearnConfig:
    k: int = 5
    t_star: float = 0.5
    epochs: int = 10
    lr: float = 0.05
    path_lr: float = 0.05
    path_steps_per_epoch: int = 10
    distance: str = "euclidean"
    margin_mode: str = "adaptive"
    alpha: float = 0.01
    batch_size: int = 16
    path_batch_size: int = 16
    seed: int = 0
    w_init: str = "theta_o"
    path_loss: str = "distill"

    def __post_init__(self):
        _check_metric(self.distance)
        if not 0.0 <= self.t_star <= 1.0:
            raise ValueError("t_star must lie in [0, 1]")
        if self.margin_mode not in ("adaptive", "fixed"):
            raise ValueError("margin_mode must be 'adaptive' or 'fixed'")
        if self.alpha < 0:
            raise ValueError("fixed margin alpha must be nonnegative")
        if self.lr <= 0 or self.path_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.w_init not in ("theta_o", "random"):
            raise ValueError("w_init must be 'theta_o' or 'random'")

    @classmethod
    def from_dict(cls, d: dict) -> "UnlearnConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown unlearn config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "UnlearnConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class UnlearnReport:
    theta_u: np.ndarray
    triplet_loss: list = field(default_factory=list)
    path_loss: list = field(default_factory=list)
    mean_margin: list = field(default_factory=list)
    rt_seconds: float = 0.0
    method: str = "manif_smc"
    control_point: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("theta_u", "control_point")}
        d["param_count"] = int(self.theta_u.size)
        return d

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["epoch", "triplet_loss", "path_loss", "mean_margin"])
            for e, row in enumerate(zip(self.triplet_loss, self.path_loss, self.mean_margin), start=1):
                out.writerow([e, *(repr(float(v)) for v in row)])


def manif_smc_unlearn(spec, theta_o, split, cfg: UnlearnConfig) -> UnlearnReport:
    """Run the unlearning loop.

    Each epoch: (A) fit the Bezier control point on the retained
    neighbourhood, (B) take the surrogate at ``t_star``, (C) compute
    centroids and margins under the surrogate and take SGD steps on the
    triplet loss over erased minibatches. With ``margin_mode="fixed"``
    steps A and B are skipped, the margin is ``cfg.alpha`` and centroids
    come from the current unlearned model.
    """
    start = time.perf_counter()
    theta_o = np.asarray(theta_o, dtype=np.float64)
    theta_u = theta_o.copy()
    rng = np.random.default_rng(cfg.seed)
    x_erased = split.train.inputs[split.erased]
    z_o = split.original_reps
    union = split.neighbor_union
    x_union = split.train.inputs[union]
    if cfg.path_loss == "distill":
        union_targets = representations(spec, theta_o, x_union)
    else:
        union_targets = split.train.labels[union]

    w = theta_o.copy() if cfg.w_init == "theta_o" else init_params(spec, rng.integers(2 ** 63))
    report = UnlearnReport(theta_u=theta_u, method="manif_smc" if cfg.margin_mode == "adaptive" else "manif_fixed")
    n = len(split.erased)

    for epoch in range(cfg.epochs):
        if cfg.margin_mode == "adaptive":
            history = []
            objective = retained_objective(
                spec, x_union, union_targets, cfg.path_batch_size, rng.integers(2 ** 63), loss=cfg.path_loss
            )
            path = train_control_point(
                BezierPath(theta_u, w, theta_o), objective, cfg.path_steps_per_epoch, cfg.path_lr, rng, history
            )
            w = path.w
            theta_tilde = bezier_point(path, cfg.t_star)
            targets = neighbor_centroids(spec, theta_tilde, split)
            margins = adaptive_margins(representations(spec, theta_tilde, x_erased), z_o, targets, cfg.distance)
            report.path_loss.append(float(np.mean(history)) if history else 0.0)
        else:
            targets = neighbor_centroids(spec, theta_u, split)
            margins = np.full(n, cfg.alpha)
            report.path_loss.append(0.0)
        report.mean_margin.append(float(margins.mean()) if n else 0.0)

        order = rng.permutation(n)
        epoch_loss = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            fn = triplet_objective(x_erased[idx], z_o[idx], targets[idx], margins[idx], cfg.distance)
            try:
                value, g = gradient(spec, theta_u, x_erased[idx], fn)
            except FloatingPointError as exc:
                raise FloatingPointError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from exc
            epoch_loss += value
            if value > 0:
                theta_u = sgd_step(theta_u, g, cfg.lr)
        report.triplet_loss.append(epoch_loss)

    report.theta_u = theta_u
    report.control_point = w
    report.rt_seconds = time.perf_counter() - start
    return report
