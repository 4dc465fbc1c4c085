"""Datasets, IDX loading and erased/retained splits with cached neighbourhoods."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .nn import representations

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(ValueError):
    pass


class IdxFormatError(DatasetError):
    """Empty file or wrong magic number."""


class IdxTruncatedError(DatasetError):
    """File shorter than its header promises."""


class IdxCountMismatchError(DatasetError):
    """Image and label files disagree on the number of items."""


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise DatasetError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.class_count)


def cluster_centers(class_count: int, dim: int) -> np.ndarray:
    """Class ``c`` sits on the hypercube corner whose sign pattern is the
    binary expansion of ``c`` (bit b set -> +1 on axis b, else -1), so
    centres are pairwise at least 2 apart. When there are more classes than
    corners the centres are spaced 2 apart along the first axis instead."""
    if dim < 1:
        raise DatasetError("dim must be >= 1")
    centers = np.zeros((class_count, dim))
    if dim < 63 and class_count <= 2 ** dim:
        for c in range(class_count):
            for b in range(dim):
                centers[c, b] = 1.0 if (c >> b) & 1 else -1.0
    else:
        centers[:, 0] = 2.0 * np.arange(class_count) - (class_count - 1)
    return centers


def gen_gaussian_clusters(class_count: int, per_class: int, dim: int, spread: float, seed) -> Dataset:
    """Isotropic Gaussian blobs around :func:`cluster_centers`, shuffled by ``seed``."""
    if dim < 1:
        raise DatasetError("dim must be >= 1")
    if class_count < 1 or per_class < 1:
        raise DatasetError("class_count and per_class must be >= 1")
    if spread <= 0:
        raise DatasetError("spread must be positive")
    rng = np.random.default_rng(seed)
    centers = cluster_centers(class_count, dim)
    labels = np.repeat(np.arange(class_count), per_class)
    inputs = centers[labels] + spread * rng.standard_normal((len(labels), dim))
    order = rng.permutation(len(labels))
    return Dataset(inputs[order], labels[order], class_count)


def _read(path) -> bytes:
    data = Path(path).read_bytes()
    if not data:
        raise IdxFormatError(f"{path}: empty file")
    return data


def _header(data, path, magic, ndims):
    if len(data) < 4:
        raise IdxFormatError(f"{path}: too short for a magic number")
    (got,) = struct.unpack(">I", data[:4])
    if got != magic:
        raise IdxFormatError(f"{path}: magic {got:#010x}, expected {magic:#010x}")
    end = 4 + 4 * ndims
    if len(data) < end:
        raise IdxTruncatedError(f"{path}: truncated header")
    return struct.unpack(">" + "I" * ndims, data[4:end]), end


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair (unsigned byte payloads), pixels scaled to [0, 1]."""
    img = _read(images_path)
    lab = _read(labels_path)
    (n, rows, cols), off = _header(img, images_path, IDX_IMAGES_MAGIC, 3)
    (m,), loff = _header(lab, labels_path, IDX_LABELS_MAGIC, 1)
    if len(img) - off < n * rows * cols:
        raise IdxTruncatedError(f"{images_path}: expected {n * rows * cols} pixel bytes, found {len(img) - off}")
    if len(lab) - loff < m:
        raise IdxTruncatedError(f"{labels_path}: expected {m} label bytes, found {len(lab) - loff}")
    if n != m:
        raise IdxCountMismatchError(f"{n} images but {m} labels")
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=off)
    labels = np.frombuffer(lab, dtype=np.uint8, count=m, offset=loff).astype(np.int64)
    inputs = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    class_count = int(labels.max()) + 1 if m else 0
    return Dataset(inputs, labels, class_count)


def write_idx(images_path, labels_path, images, labels) -> None:
    """Write uint8 images of shape (n, rows, cols) and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


@dataclass
class UnlearnSplit:
    """Erased/retained partition of ``train`` plus the cached quantities the
    unlearning loop treats as fixed.

    ``original_reps[i]`` and ``neighbor_sets[i]`` belong to ``erased[i]``;
    neighbour sets hold indices into ``train``.
    """

    train: Dataset
    erased: np.ndarray
    retained: np.ndarray
    original_reps: np.ndarray
    neighbor_sets: np.ndarray
    k: int
    seed: Optional[int] = None
    balanced: bool = False
    test: Optional[Dataset] = None

    @property
    def neighbor_union(self) -> np.ndarray:
        return np.unique(self.neighbor_sets)

    @property
    def uss(self) -> int:
        return len(self.erased)

    def erased_data(self) -> Dataset:
        return self.train.subset(self.erased)

    def retained_data(self) -> Dataset:
        return self.train.subset(self.retained)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "k": self.k,
            "balanced": self.balanced,
            "erased": self.erased.tolist(),
            "retained": self.retained.tolist(),
            "neighbor_sets": self.neighbor_sets.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text, dataset, spec, params_o, test=None) -> "UnlearnSplit":
        """Rebuild a split from its index lists, recomputing representations."""
        d = json.loads(text)
        split = split_from_indices(dataset, d["erased"], d["k"], spec, params_o, test=test, seed=d.get("seed"))
        split.balanced = d.get("balanced", False)
        if split.neighbor_sets.tolist() != d["neighbor_sets"]:
            raise DatasetError("stored neighbour sets do not match this dataset/model")
        return split


def draw_erased(dataset: Dataset, uss: int, seed, balanced: bool = False) -> np.ndarray:
    if not 0 <= uss < len(dataset):
        raise DatasetError(f"uss={uss} must be smaller than the dataset size {len(dataset)}")
    rng = np.random.default_rng(seed)
    if not balanced:
        return np.sort(rng.choice(len(dataset), size=uss, replace=False))
    # round-robin over classes, uniform within each class
    pools = [rng.permutation(np.flatnonzero(dataset.labels == c)) for c in range(dataset.class_count)]
    pools = [p for p in pools if len(p)]
    picked, pos = [], [0] * len(pools)
    while len(picked) < uss:
        for i, pool in enumerate(pools):
            if len(picked) == uss:
                break
            if pos[i] < len(pool):
                picked.append(pool[pos[i]])
                pos[i] += 1
    return np.sort(np.asarray(picked, dtype=np.int64))


def split_from_indices(dataset, erased, k, spec, params_o, test=None, seed=None) -> UnlearnSplit:
    erased = np.sort(np.asarray(erased, dtype=np.int64))
    mask = np.ones(len(dataset), dtype=bool)
    mask[erased] = False
    retained = np.flatnonzero(mask)
    if k < 1 or k > len(retained):
        raise DatasetError(f"k={k} must be in [1, {len(retained)}] (retained size)")
    original = representations(spec, params_o, dataset.inputs[erased]) if len(erased) else np.zeros((0, spec.rep_dim))
    retained_reps = representations(spec, params_o, dataset.inputs[retained])
    nearest = _kernels.knn_select(original, retained_reps, k) if len(erased) else np.zeros((0, k), np.int64)
    return UnlearnSplit(
        train=dataset,
        erased=erased,
        retained=retained,
        original_reps=np.atleast_2d(original),
        neighbor_sets=retained[nearest],
        k=k,
        seed=seed,
        test=test,
    )


def make_split(dataset, uss, k, spec, params_o, seed, test=None, balanced=False) -> UnlearnSplit:
    """Draw ``uss`` erased samples and cache their original representations
    and ``k`` nearest retained neighbours (Euclidean, in the original model's
    representation space, ties to the lower index)."""
    erased = draw_erased(dataset, uss, seed, balanced=balanced)
    split = split_from_indices(dataset, erased, k, spec, params_o, test=test, seed=seed)
    split.balanced = balanced
    return split
