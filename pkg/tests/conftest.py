import math

import numpy as np
import pytest

from explainleak.numcore import MlpConfig, ModelParams, zero_params


def random_mlp(rng, d=None, hidden=None, k=None, scale=1.0):
    """Glorot-uniform weights (times ``scale``) and small random biases."""
    d = d or int(rng.integers(2, 11))
    k = k or int(rng.integers(2, 5))
    hidden = hidden or tuple(int(h) for h in rng.integers(3, 9, size=2))
    cfg = MlpConfig(d, hidden, k)
    sizes = cfg.layer_sizes
    weights = [rng.uniform(-1, 1, size=(o, i)) * scale * math.sqrt(6 / (i + o)) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(0, 0.1, size=o) for o in sizes[1:]]
    return ModelParams(weights, biases, cfg)


def linear_model(W, b=None):
    W = np.asarray(W, dtype=float)
    b = np.zeros(W.shape[0]) if b is None else np.asarray(b, dtype=float)
    return ModelParams([W], [b], MlpConfig(W.shape[1], (), W.shape[0]))


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def max_rel_err(a, b, abs_floor=1e-6):
    """Relative error elementwise; entries below ``abs_floor`` in both compared absolutely."""
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.abs(a), np.abs(b))
    small = denom < abs_floor
    err = np.where(small, np.abs(a - b), np.abs(a - b) / np.where(small, 1.0, denom))
    return float(err.max())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def zero_model():
    return zero_params(MlpConfig(4, (5,), 3))


# PASS/FAIL lines recorded by the acceptance module, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
