"""Functional-information machinery: transmitting matrices, power
iteration, and block spectral norms.

A block mapping input batch Z_in (M x d_in, rows are samples) to output
batch Z_out (M x d_out) gets a transmitting matrix

    T = (Zn_in^T Zn_out)^T (Zn_in^T Zn_out)      (d_out x d_out)

with per-feature-column normalization Zn, so diag(Zn^T Zn) = 1.  T is
symmetric positive semidefinite by construction, and when the input
features are orthonormal, sqrt of its top eigenvalue estimates the
block's spectral norm.  The top eigenvalue is found by power iteration,
which stays differentiable through the unrolled multiply-normalize
steps so the estimate can be trained against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from srtc import autodiff as ad
from srtc.autodiff import Graph, GraphError, Tensor

log = logging.getLogger(__name__)

# Floor on feature-column norms; zero columns stay zero and are logged.
COLUMN_NORM_FLOOR = 1e-12

# Guard against division by zero when an iterate collapses (zero matrix).
_ITERATE_FLOOR = 1e-30

TRAIN_POWER_ITERS = 20
VERIFY_POWER_ITERS = 100


@dataclass
class TransmittingMatrix:
    """Square PSD matrix summarizing one block, plus its source dims."""

    t: np.ndarray
    d_in: int
    d_out: int
    m: int


@dataclass
class SpectralEstimate:
    value: float
    iterations: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"spectral estimate must be >= 0: {self.value}")


def feature_normalize(z: Tensor) -> Tensor:
    """Scale every feature column to unit Euclidean norm over the batch."""
    if z.data.ndim != 2:
        raise GraphError(
            f"feature_normalize: expected 2-d, got shape {z.data.shape}")
    raw_norms = np.sqrt((z.data * z.data).sum(axis=0))
    if (raw_norms < COLUMN_NORM_FLOOR).any():
        zero_cols = np.nonzero(raw_norms < COLUMN_NORM_FLOOR)[0]
        log.debug("feature_normalize: %d zero column(s) at %s",
                  len(zero_cols), zero_cols.tolist())
    norms = ad.clip_min(
        ad.sqrt(ad.reduce_sum(ad.mul(z, z), axis=0, keepdims=True)),
        COLUMN_NORM_FLOOR)
    return ad.div(z, norms)


def transmitting_matrix(z_in: Tensor, z_out: Tensor,
                        normalize: bool = True) -> Tensor:
    """Build the block's transmitting matrix on the graph.

    ``normalize=False`` skips the column normalization; used by oracle
    checks that feed pre-normalized inputs and raw outputs.
    """
    if z_in.data.shape[0] != z_out.data.shape[0]:
        raise GraphError(
            f"transmitting_matrix: batch mismatch {z_in.data.shape} vs "
            f"{z_out.data.shape}")
    if normalize:
        z_in = feature_normalize(z_in)
        z_out = feature_normalize(z_out)
    cross = ad.matmul(ad.transpose(z_in), z_out)
    return ad.matmul(ad.transpose(cross), cross)


def power_iteration(t: Tensor, n_iter: int, start: np.ndarray) -> Tensor:
    """sqrt of the top eigenvalue of a PSD matrix, by multiply-normalize.

    ``start`` holds one or more random start vectors drawn from the
    run's seeded generator: shape (d,) or (d, k).  Each column iterates
    independently (multiply, then per-column normalize) and the largest
    per-column estimate wins; a full (d, d) start is used for
    verification, a single column inside training.  Returns a scalar
    tensor; a zero matrix yields 0.  The unrolled iteration keeps the
    estimate differentiable in ``t``.
    """
    if n_iter < 1:
        raise GraphError(f"power_iteration: n_iter must be >= 1, got {n_iter}")
    d = t.data.shape[0]
    if t.data.ndim != 2 or t.data.shape != (d, d):
        raise GraphError(
            f"power_iteration: expected square matrix, got {t.data.shape}")
    start = np.asarray(start, dtype=np.float64)
    if start.ndim == 1:
        start = start.reshape(d, 1)
    if start.shape[0] != d:
        raise GraphError(
            f"power_iteration: start of shape {start.shape} does not match "
            f"matrix of size {d}")
    graph = t.graph
    v = graph.constant(start)
    mu = None
    for _ in range(n_iter):
        m = ad.matmul(t, v)
        mu = ad.sqrt(ad.reduce_sum(ad.mul(m, m), axis=0, keepdims=True))
        v = ad.div(m, ad.clip_min(mu, _ITERATE_FLOOR))
    return ad.sqrt(ad.reduce_max(mu))


def block_spectral_norm(z_in: Tensor, z_out: Tensor, n_iter: int,
                        start: np.ndarray, normalize: bool = True) -> Tensor:
    """Spectral-norm estimate of the block taking z_in to z_out."""
    return power_iteration(transmitting_matrix(z_in, z_out, normalize),
                           n_iter, start)


def j_fi(sn_s, sn_teachers) -> float:
    """Functional-information loss: sum of |teacher - target| estimates."""
    if len(sn_teachers) == 0:
        raise ValueError("j_fi: need at least one teacher estimate")
    if isinstance(sn_s, Tensor):
        total = None
        for sn_g in sn_teachers:
            term = ad.absolute(ad.sub(sn_g, sn_s))
            total = term if total is None else ad.add(total, term)
        return total
    return float(sum(abs(sn_g - sn_s) for sn_g in sn_teachers))


# Array-facing wrappers (verification, reporting); one implementation
# shared with the graph path via a throwaway graph.

def transmitting_matrix_np(z_in: np.ndarray, z_out: np.ndarray,
                           normalize: bool = True) -> TransmittingMatrix:
    g = Graph()
    t = transmitting_matrix(g.constant(z_in), g.constant(z_out), normalize)
    return TransmittingMatrix(t.data, z_in.shape[1], z_out.shape[1],
                              z_in.shape[0])


def spectral_estimate(t: np.ndarray | TransmittingMatrix, n_iter: int,
                      seed: int) -> SpectralEstimate:
    """Verification-grade estimate: full (d, d) start matrix."""
    matrix = t.t if isinstance(t, TransmittingMatrix) else np.asarray(t)
    d = matrix.shape[0]
    start = np.random.default_rng(seed).standard_normal((d, d))
    g = Graph()
    value = power_iteration(g.constant(matrix), n_iter, start)
    return SpectralEstimate(float(value.data), n_iter)
