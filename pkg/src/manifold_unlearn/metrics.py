"""Unlearning metrics: loss-threshold membership inference, accuracies, runtime."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .baselines import per_sample_loss
from .nn import forward

RESULTS_COLUMNS = ["method", "uss", "k", "margin_mode", "mia", "ra", "ta", "rt"]


@dataclass
class MetricsRecord:
    mia: float
    ra: Optional[float]
    ta: Optional[float]
    rt_seconds: float
    r_mse: Optional[float] = None
    t_mse: Optional[float] = None

    def __post_init__(self):
        for name in ("mia", "ra", "ta"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.rt_seconds < 0:
            raise ValueError("rt_seconds must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def accuracy(spec, params, dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index."""
    if not spec.head:
        raise ValueError("accuracy needs a spec with a class head")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    pred = np.argmax(forward(spec, params, dataset.inputs).logits, axis=1)
    return float(np.mean(pred == dataset.labels))


def threshold_attack(erased_losses, retained_losses) -> float:
    """Fraction of erased losses above the mean retained loss."""
    erased_losses = np.asarray(erased_losses, dtype=np.float64)
    if erased_losses.size == 0:
        raise ValueError("erased set is empty")
    retained_losses = np.asarray(retained_losses, dtype=np.float64)
    if retained_losses.size == 0:
        raise ValueError("retained set is empty")
    tau = retained_losses.mean()
    return float(np.mean(erased_losses > tau))


def mia_success_rate(spec, params, erased, retained, loss="cross_entropy") -> float:
    """Share of erased samples a loss-threshold attacker labels non-members."""
    if len(erased) == 0:
        raise ValueError("erased set is empty")
    return threshold_attack(per_sample_loss(spec, params, erased, loss), per_sample_loss(spec, params, retained, loss))


def evaluate(spec, params, split, test, rt_seconds, loss="cross_entropy") -> MetricsRecord:
    erased = split.erased_data()
    retained = split.retained_data()
    mia = mia_success_rate(spec, params, erased, retained, loss)
    if loss == "cross_entropy":
        return MetricsRecord(mia, accuracy(spec, params, retained), accuracy(spec, params, test), rt_seconds)
    r_mse = float(per_sample_loss(spec, params, retained, loss).mean())
    t_mse = float(per_sample_loss(spec, params, test, loss).mean())
    return MetricsRecord(mia, None, None, rt_seconds, r_mse, t_mse)


def append_results_row(path, method, uss, k, margin_mode, record: MetricsRecord) -> None:
    """Append one row to the results CSV, writing the header for a new file."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        out = csv.writer(fh)
        if new:
            out.writerow(RESULTS_COLUMNS)

        def fmt(v):
            return "" if v is None else repr(float(v))

        out.writerow([method, uss, k, margin_mode, fmt(record.mia), fmt(record.ra), fmt(record.ta), fmt(record.rt_seconds)])
