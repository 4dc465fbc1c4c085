"""Loss functionals for :func:`manifold_unlearn.nn.gradient`.

Each builder returns a callable ``ForwardResult -> (value, d_rep, d_logits)``.
"""
import numpy as np


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_per_sample(logits, labels):
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    return -log_softmax(logits)[np.arange(len(labels)), labels]


def cross_entropy(labels, reduction="mean"):
    labels = np.asarray(labels, dtype=np.int64)

    def loss(fr):
        if fr.logits is None:
            raise ValueError("cross-entropy needs a network with a class head")
        logp = log_softmax(fr.logits)
        n = len(labels)
        scale = 1.0 / n if reduction == "mean" else 1.0
        value = -logp[np.arange(n), labels].sum() * scale
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1.0
        return value, None, d * scale

    return loss


def mse_per_sample(pred, targets):
    diff = np.atleast_2d(pred) - np.atleast_2d(targets)
    return (diff * diff).mean(axis=1)


def representation_mse(targets):
    """Mean over samples and dimensions of ``(representation - target)**2``."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))

    def loss(fr):
        diff = fr.representation - targets
        value = (diff * diff).mean()
        return value, 2.0 * diff / diff.size, None

    return loss


def output_mse(targets):
    """Same as :func:`representation_mse` but on the final network output."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))

    def loss(fr):
        diff = fr.output - targets
        value = (diff * diff).mean()
        d = 2.0 * diff / diff.size
        if fr.logits is not None:
            return value, None, d
        return value, d, None

    return loss


def combine(*terms):
    """Sum of several loss functionals."""

    def loss(fr):
        total = 0.0
        d_rep = None
        d_logits = None
        for term in terms:
            v, dr, dl = term(fr)
            total += v
            if dr is not None:
                d_rep = dr if d_rep is None else d_rep + dr
            if dl is not None:
                d_logits = dl if d_logits is None else d_logits + dl
        return total, d_rep, d_logits

    return loss
