import numpy as np
import pytest


def central_diff(f, theta, h):
    """Central finite differences of scalar f at flat parameter vector theta."""
    g = np.zeros_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        g[i] = (f(tp) - f(tm)) / (2.0 * h)
    return g


def flatten(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def unflatten(theta, like):
    out = []
    pos = 0
    for a in like:
        out.append(theta[pos : pos + a.size].reshape(a.shape))
        pos += a.size
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
