"""Dense feedforward encoders with exact reverse-mode gradients.

Parameters live in a single flat float64 vector (a "param vector"). The
layout is layer-major; within a layer the weight matrix of shape
``(fan_in, fan_out)`` comes first in row-major order, followed by the bias
of length ``fan_out`` (omitted for bias-free specs).

The representation is the post-activation output of the last hidden layer
when the spec carries a class head, otherwise the output of the final layer.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class DimensionError(ValueError):
    """Input or parameter shapes disagree with the spec."""


class NumericError(FloatingPointError):
    """A forward or backward pass produced a non-finite value."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class EncoderSpec:
    layers: tuple
    activations: tuple
    head: bool = False
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(n) for n in self.layers))
        if isinstance(self.activations, str):
            acts = (self.activations,) * (len(self.layers) - 1)
        else:
            acts = tuple(self.activations)
        object.__setattr__(self, "activations", acts)
        if len(self.layers) < 2:
            raise ValueError("an encoder needs at least an input and an output layer")
        if self.head and len(self.layers) < 3:
            raise ValueError("a class head needs a representation layer below it")
        if any(n < 1 for n in self.layers):
            raise ValueError(f"layer sizes must be positive, got {self.layers}")
        if len(acts) != len(self.layers) - 1:
            raise ValueError(f"expected {len(self.layers) - 1} activations, got {len(acts)}")
        bad = [a for a in acts if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unknown activation(s) {bad}; choose from {ACTIVATIONS}")

    @property
    def n_layers(self) -> int:
        return len(self.layers) - 1

    @property
    def rep_layer(self) -> int:
        """Index into ``layers`` of the representation layer."""
        return len(self.layers) - 2 if self.head else len(self.layers) - 1

    @property
    def rep_dim(self) -> int:
        return self.layers[self.rep_layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0]

    @property
    def n_classes(self) -> Optional[int]:
        return self.layers[-1] if self.head else None

    def to_dict(self) -> dict:
        return {
            "layers": list(self.layers),
            "activations": list(self.activations),
            "head": self.head,
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSpec":
        return cls(d["layers"], d["activations"], head=d.get("head", False), bias=d.get("bias", True))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EncoderSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class ForwardResult:
    representation: np.ndarray
    logits: Optional[np.ndarray] = None

    @property
    def output(self) -> np.ndarray:
        return self.logits if self.logits is not None else self.representation


def layer_shapes(spec: EncoderSpec):
    return list(zip(spec.layers[:-1], spec.layers[1:]))


def param_count(spec: EncoderSpec) -> int:
    return sum(i * o + (o if spec.bias else 0) for i, o in layer_shapes(spec))


def init_params(spec: EncoderSpec, rng) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    rng = np.random.default_rng(rng)
    chunks = []
    for fan_in, fan_out in layer_shapes(spec):
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        if spec.bias:
            chunks.append(rng.uniform(-bound, bound, size=fan_out))
    return np.concatenate(chunks)


def unflatten(spec: EncoderSpec, params) -> list:
    """Split a param vector into ``[(W, b), ...]``; ``b`` is None when bias-free.

    The returned arrays are views into ``params``.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != param_count(spec):
        raise DimensionError(f"expected {param_count(spec)} parameters, got shape {params.shape}")
    out = []
    pos = 0
    for fan_in, fan_out in layer_shapes(spec):
        w = params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = None
        if spec.bias:
            b = params[pos:pos + fan_out]
            pos += fan_out
        out.append((w, b))
    return out


def flatten(weights: Sequence, spec: Optional[EncoderSpec] = None) -> np.ndarray:
    chunks = []
    for w, b in weights:
        chunks.append(np.asarray(w, dtype=np.float64).ravel())
        if b is not None:
            chunks.append(np.asarray(b, dtype=np.float64).ravel())
    vec = np.concatenate(chunks)
    if spec is not None and vec.size != param_count(spec):
        raise DimensionError(f"expected {param_count(spec)} parameters, got {vec.size}")
    return vec


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a):
    if name == "relu":
        # subgradient 0 at the kink
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _as_batch(spec, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError(f"expected inputs of dimension {spec.input_dim}, got shape {x.shape}")
    return x, single


def _run(spec, params, x):
    layers = unflatten(spec, params)
    acts = [x]
    pres = []
    a = x
    for idx, ((w, b), name) in enumerate(zip(layers, spec.activations), start=1):
        # overflow is reported below as NumericError with the layer index
        with np.errstate(over="ignore", invalid="ignore"):
            z = a @ w
            if b is not None:
                z = z + b
            a = _act(name, z)
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite activation at layer {idx}", layer=idx)
        pres.append(z)
        acts.append(a)
    return layers, pres, acts


def forward(spec: EncoderSpec, params, x) -> ForwardResult:
    """Evaluate the network on one input vector or a batch of rows."""
    x, single = _as_batch(spec, x)
    _, _, acts = _run(spec, params, x)
    rep = acts[spec.rep_layer]
    logits = acts[-1] if spec.head else None
    if single:
        rep = rep[0]
        logits = None if logits is None else logits[0]
    return ForwardResult(rep, logits)


def representations(spec: EncoderSpec, params, x) -> np.ndarray:
    return forward(spec, params, x).representation


# A loss functional maps the batch ForwardResult to
# (value, d value / d representation, d value / d logits); either
# derivative may be None when the loss does not depend on it.
LossFn = Callable[[ForwardResult], tuple]


def gradient(spec: EncoderSpec, params, x, loss: LossFn):
    """Loss value and its exact gradient with respect to ``params``."""
    x, _ = _as_batch(spec, x)
    layers, pres, acts = _run(spec, params, x)
    fr = ForwardResult(acts[spec.rep_layer], acts[-1] if spec.head else None)
    value, d_rep, d_logits = loss(fr)
    value = float(value)
    if not np.isfinite(value):
        raise NumericError("non-finite loss value", layer=spec.n_layers)

    top = d_logits if spec.head else d_rep
    g = np.zeros_like(acts[-1]) if top is None else np.asarray(top, dtype=np.float64)
    grads = [None] * spec.n_layers
    for li in range(spec.n_layers - 1, -1, -1):
        if spec.head and d_rep is not None and li + 1 == spec.rep_layer:
            g = g + d_rep
        dz = g * _act_grad(spec.activations[li], pres[li], acts[li + 1])
        w, b = layers[li]
        gw = acts[li].T @ dz
        gb = dz.sum(axis=0) if b is not None else None
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(dz))):
            raise NumericError(f"non-finite gradient at layer {li + 1}", layer=li + 1)
        grads[li] = (gw, gb)
        g = dz @ w.T
    return value, flatten(grads)


def sgd_step(params, grad, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise DimensionError(f"params {params.shape} and grad {grad.shape} differ")
    return params - lr * grad


def save_params(path, params) -> None:
    """Little-endian uint64 length header followed by float64 values."""
    params = np.asarray(params, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.tobytes())


def load_params(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: missing length header")
    (n,) = struct.unpack("<Q", raw[:8])
    if len(raw) != 8 + 8 * n:
        raise ValueError(f"{path}: header says {n} values, file holds {(len(raw) - 8) / 8:g}")
    return np.frombuffer(raw[8:], dtype="<f8").astype(np.float64)
