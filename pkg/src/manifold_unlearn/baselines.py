"""Training and the reference unlearning procedures: retraining from scratch,
gradient ascent on the erased set, and fine-tuning on the retained set."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import losses
from .mmcr import NORMALIZE, mmcr_objective
from .nn import forward, gradient, init_params, sgd_step

LOSSES = ("cross_entropy", "representation_mse")


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.1
    batch_size: int = 16
    seed: int = 0
    mmcr_lambda: float = 0.0
    loss: str = "cross_entropy"
    mmcr_normalize: str = "centroid"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.mmcr_lambda < 0:
            raise ValueError("mmcr_lambda must be nonnegative")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.mmcr_normalize not in NORMALIZE:
            raise ValueError(f"mmcr_normalize must be one of {NORMALIZE}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def training_objective(spec, inputs, labels, loss="cross_entropy", mmcr_lambda=0.0, mmcr_normalize="centroid"):
    """Batch training loss: cross-entropy on the head, or MSE of the final
    output against the input (autoencoding), plus the optional MMCR term."""
    if loss == "cross_entropy":
        base = losses.cross_entropy(labels)
    elif loss == "representation_mse":
        base = losses.output_mse(inputs)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    if mmcr_lambda > 0:
        return losses.combine(base, mmcr_objective(labels, mmcr_lambda, mmcr_normalize))
    return base


def per_sample_loss(spec, params, dataset, loss="cross_entropy") -> np.ndarray:
    fr = forward(spec, params, dataset.inputs)
    if loss == "cross_entropy":
        return losses.cross_entropy_per_sample(fr.logits, dataset.labels)
    return losses.mse_per_sample(fr.output, dataset.inputs)


def run_sgd(spec, params, dataset, cfg: TrainConfig, trace=None):
    """Seeded minibatch SGD; batch order is a fresh permutation per epoch."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    order_rng = np.random.default_rng(_streams(cfg.seed)[1])
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(dataset))
        total = 0.0
        for lo in range(0, len(dataset), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            fn = training_objective(
                spec, dataset.inputs[idx], dataset.labels[idx], cfg.loss, cfg.mmcr_lambda, cfg.mmcr_normalize
            )
            value, g = gradient(spec, params, dataset.inputs[idx], fn)
            if not np.isfinite(value):
                raise FloatingPointError(f"training diverged at epoch {epoch + 1}")
            params = sgd_step(params, g, cfg.lr)
            total += value * len(idx)
        if trace is not None:
            trace.append(total / len(dataset))
    return params


def _streams(seed):
    """Independent (initialisation, batch order) seed sequences."""
    return np.random.SeedSequence(seed).spawn(2)


def train(spec, dataset, cfg: TrainConfig, trace=None) -> np.ndarray:
    params = init_params(spec, np.random.default_rng(_streams(cfg.seed)[0]))
    return run_sgd(spec, params, dataset, cfg, trace)


def retrain_from_scratch(spec, retained, cfg: TrainConfig) -> np.ndarray:
    """Fresh seeded training on the retained dataset only.

    Takes the retained :class:`Dataset` rather than a split, so erased
    inputs never reach it.
    """
    if len(retained) == 0:
        raise ValueError("retained set is empty")
    return train(spec, retained, cfg)


def gradient_ascent(theta, objective, steps, lr):
    """``theta <- theta + lr * grad`` for ``steps`` iterations of ``objective(theta) -> (loss, grad)``."""
    theta = np.asarray(theta, dtype=np.float64)
    for step in range(steps):
        value, g = objective(theta)
        theta = theta + lr * g
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError(f"gradient ascent diverged at step {step + 1}")
    return theta


def gradient_ascent_unlearn(spec, theta_o, erased, steps=10, lr=0.01, loss="cross_entropy", early_stop=True):
    """Ascend the training loss on the erased set, full batch.

    With ``early_stop`` the loop ends once erased accuracy is below chance.
    """
    if len(erased) == 0:
        raise ValueError("erased set is empty")
    theta = np.asarray(theta_o, dtype=np.float64).copy()
    fn = training_objective(spec, erased.inputs, erased.labels, loss)
    chance = 1.0 / erased.class_count if erased.class_count else 0.0
    for step in range(steps):
        if early_stop and loss == "cross_entropy" and spec.head:
            pred = np.argmax(forward(spec, theta, erased.inputs).logits, axis=1)
            if np.mean(pred == erased.labels) < chance:
                break
        theta = gradient_ascent(theta, lambda th: gradient(spec, th, erased.inputs, fn), 1, lr)
    return theta


def fine_tune(spec, theta_u, retained, epochs, lr, batch_size=16, seed=0, loss="cross_entropy") -> np.ndarray:
    """Labelled SGD on the retained set starting from ``theta_u``."""
    if len(retained) == 0:
        raise ValueError("retained set is empty")
    cfg = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size, seed=seed, loss=loss)
    return run_sgd(spec, np.asarray(theta_u, dtype=np.float64).copy(), retained, cfg)


def baseline_report(theta, method, rt_seconds):
    """Minimal report in the same JSON shape as :class:`UnlearnReport`."""
    from .manif_smc import UnlearnReport

    return UnlearnReport(theta_u=theta, method=method, rt_seconds=rt_seconds)


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
