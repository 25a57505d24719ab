"""Adam optimizer over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from srtc import _kernels


@dataclass
class AdamState:
    """Per-parameter first/second moments plus a shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays.

    Parameters missing from ``grads`` are left untouched.  A non-finite
    gradient aborts before any parameter is modified.
    """
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} of shape {params[name].shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError(
                f"non-finite gradient for parameter {name!r}")
    state.step += 1
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        _kernels.adam_update(p, g, state.m[name], state.v[name], state.step,
                             lr, state.beta1, state.beta2, state.eps)
