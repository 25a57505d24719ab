"""Shared oracles: central finite differences and gradient comparison."""

import numpy as np
import pytest


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f(x) w.r.t. every entry of x.

    f must treat x as read-only input; x is restored after probing.
    """
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = f()
        flat_x[i] = orig - h
        f_minus = f()
        flat_x[i] = orig
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def gradient_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-relative error between gradient tensors."""
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-8)
    return float(num / den)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
