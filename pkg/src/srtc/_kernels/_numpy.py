"""Numpy reference implementations of the hot kernels.

These are the fallback backend when the compiled extension
(``srtc._kernels._speed``) is unavailable.  Both backends implement the
same arithmetic in the same order so results agree to the last ulp or
two; parity is checked in tests/test_kernels.py.
"""

import numpy as np

BACKEND_NAME = "numpy"


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(grad, x):
    return np.where(x > 0.0, grad, 0.0)


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(grad, y):
    # y is the forward output tanh(x)
    return grad * (1.0 - y * y)


def softplus_fwd(x):
    # log(1 + e^x), overflow-safe for large |x|
    return np.logaddexp(0.0, x)


def softplus_bwd(grad, x):
    # d/dx softplus = sigmoid(x), evaluated without overflow
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return grad * out


def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, in place on param/m/v."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
