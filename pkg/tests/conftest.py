import numpy as np
import pytest

from manifold_unlearn.datagen import gen_gaussian_clusters, make_split
from manifold_unlearn.nn import EncoderSpec, gradient, init_params


def central_difference(f, theta, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def grad_check(spec, params, x, loss, h=1e-6):
    """Relative error between the backward pass and finite differences."""
    _, analytic = gradient(spec, params, x, loss)
    numeric = central_difference(lambda p: gradient(spec, p, x, loss)[0], params, h)
    return rel_err(analytic, numeric)


def random_spec(rng, head=True, acts=("tanh",)):
    d_in = int(rng.integers(2, 5))
    hidden = int(rng.integers(3, 7))
    rep = int(rng.integers(2, 5))
    act = str(rng.choice(acts))
    if head:
        return EncoderSpec([d_in, hidden, rep, int(rng.integers(2, 4))], [act, act, "identity"], head=True)
    return EncoderSpec([d_in, hidden, rep], [act, "identity"])


@pytest.fixture
def small_problem():
    """Trained-from-init toy setup: 3 classes of 20 points in 2-D."""
    spec = EncoderSpec([2, 8, 4, 3], ["tanh", "tanh", "identity"], head=True)
    ds = gen_gaussian_clusters(3, 20, 2, 0.5, seed=1)
    params = init_params(spec, np.random.default_rng(2))
    split = make_split(ds, 6, 3, spec, params, seed=3)
    return spec, params, ds, split


# PASS/FAIL lines appended by the acceptance suite, echoed in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
