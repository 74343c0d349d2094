"""Shared oracles for the test suite."""

import numpy as np
import pytest

from amcnet import autodiff as ad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, 1)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / scale))


def gradcheck(make_loss, params, h: float = 1e-5) -> float:
    """Compare backward() grads against central finite differences.

    ``make_loss`` must rebuild a scalar loss Tensor from the params'
    current .data every time it is called. Returns the worst relative
    error over all elements of all params.
    """
    loss = make_loss()
    for p in params:
        p.zero_grad()
    ad.backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    with ad.no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = float(make_loss().data)
                flat[i] = orig - h
                down = float(make_loss().data)
                flat[i] = orig
                numeric[i] = (up - down) / (2.0 * h)
            worst = max(worst, relative_error(a, numeric.reshape(p.data.shape)))
    return worst


def projection_loss(out, weights: np.ndarray):
    """Reduce an op output to a scalar with a fixed random projection."""
    return ad.sum_all(ad.mul(out, weights))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
