"""Scalar training objectives for both phases.

All loss functions build onto the operands' graph and return scalar
tensors, so they are differentiable ends of the tape.  ``LossWeights``
and ``LossTerms`` carry the plain-float bookkeeping used for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from srtc import autodiff as ad
from srtc.autodiff import GraphError, Tensor

# Floor applied to row norms before normalization; rectified extractors
# can emit all-zero rows early in training.
ROW_NORM_FLOOR = 1e-12


@dataclass
class LossWeights:
    """Mixing weights for the four distilling objectives."""

    w_mae: float = 3.0
    w_sim: float = 0.5
    w_mi: float = 0.5
    w_fi: float = 0.5

    def __post_init__(self):
        values = (self.w_mae, self.w_sim, self.w_mi, self.w_fi)
        if any(v < 0 for v in values):
            raise ValueError(f"loss weights must be nonnegative, got {values}")
        if sum(values) <= 0:
            raise ValueError("at least one loss weight must be positive")

    def normalized(self) -> tuple[float, float, float, float]:
        total = self.w_mae + self.w_sim + self.w_mi + self.w_fi
        return (self.w_mae / total, self.w_sim / total,
                self.w_mi / total, self.w_fi / total)


@dataclass
class LossTerms:
    """Per-batch (or per-epoch) values of the four objectives.

    ``j_sim``/``j_mi``/``j_fi`` are sums over teachers; the per-teacher
    breakdowns keep the individual contributions.
    """

    j_mae: float = 0.0
    j_sim: float = 0.0
    j_mi: float = 0.0
    j_fi: float = 0.0
    sim_per_teacher: list[float] = field(default_factory=list)
    mi_per_teacher: list[float] = field(default_factory=list)
    fi_per_teacher: list[float] = field(default_factory=list)

    def validate(self) -> None:
        values = (self.j_mae, self.j_sim, self.j_mi, self.j_fi)
        if not all(np.isfinite(values)):
            raise ValueError(f"non-finite loss terms: {values}")
        if self.j_mae < 0:
            raise ValueError(f"j_mae must be nonnegative, got {self.j_mae}")
        if self.j_fi < -1e-12:
            raise ValueError(f"j_fi must be nonnegative, got {self.j_fi}")
        for s in self.sim_per_teacher:
            # each angular term lies in [0, 2] by construction
            if not -1e-12 <= s <= 2.0 + 1e-12:
                raise ValueError(f"per-teacher j_sim out of [0, 2]: {s}")

    def as_dict(self) -> dict:
        return {
            "j_mae": self.j_mae,
            "j_sim": self.j_sim,
            "j_mi": self.j_mi,
            "j_fi": self.j_fi,
            "sim_per_teacher": list(self.sim_per_teacher),
            "mi_per_teacher": list(self.mi_per_teacher),
            "fi_per_teacher": list(self.fi_per_teacher),
        }


def j_mae(y: Tensor, y_hat: Tensor) -> Tensor:
    """Mean Euclidean distance between true and predicted locations."""
    if y.shape != y_hat.shape:
        raise GraphError(
            f"j_mae: shape mismatch {y.shape} vs {y_hat.shape}")
    if y.shape[0] == 0:
        raise GraphError("j_mae: empty batch")
    return ad.mean(ad.row_norms(ad.sub(y, y_hat)))


def _row_normalize(z: Tensor) -> Tensor:
    norms = ad.clip_min(ad.row_norms(z), ROW_NORM_FLOOR)
    return ad.div(z, norms)


def j_sim(z_s: Tensor, z_g: Tensor, alpha_margin: float) -> Tensor:
    """Angular similarity loss with margin, on row-normalized batches.

    max(0, 1 - cos(arccos(cbar) + alpha)) where cbar is the batch-mean
    cosine between paired rows, clamped to [-1, 1] before arccos.
    """
    if z_s.shape != z_g.shape:
        raise GraphError(
            f"j_sim: shape mismatch {z_s.shape} vs {z_g.shape}")
    cbar = ad.mean(ad.reduce_sum(
        ad.mul(_row_normalize(z_s), _row_normalize(z_g)),
        axis=1, keepdims=True))
    theta = ad.arccos(cbar)
    return ad.relu(1.0 - ad.cos(theta + alpha_margin))


def cyclic_shift_pairing(z: Tensor) -> Tensor:
    """Rotate a batch by one row (row k of the output is row k+1 mod B).

    Pairs the rotated batch against an unshifted partner to mimic draws
    from the product of marginals.
    """
    batch = z.shape[0]
    if batch < 2:
        raise GraphError(
            f"cyclic_shift_pairing: need batch >= 2, got {batch}")
    return ad.concat([ad.narrow(z, 0, 1, batch - 1), ad.narrow(z, 0, 0, 1)],
                     axis=0)


def j_mi_term(joint_stats: Tensor, product_stats: Tensor) -> Tensor:
    """Jensen-Shannon mutual-information lower bound for one teacher.

    mean(-softplus(-joint)) - mean(softplus(product)); larger is better,
    so the overall loss subtracts it.
    """
    pos = ad.mean(ad.neg(ad.softplus(ad.neg(joint_stats))))
    neg = ad.mean(ad.softplus(product_stats))
    return ad.sub(pos, neg)


def critic_loss(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    """Wasserstein critic objective: mean(fake) - mean(real)."""
    return ad.sub(ad.mean(fake_logits), ad.mean(real_logits))


def generator_adv_loss(fake_logits: Tensor) -> Tensor:
    """Adversarial generator objective: -mean(fake)."""
    return ad.neg(ad.mean(fake_logits))


def gradient_penalty(critic_layers, z_real: Tensor, z_fake: Tensor,
                     eps_batch) -> Tensor:
    """Two-sided gradient penalty at interpolates of real and fake rows.

    ``eps_batch`` holds one uniform [0, 1] draw per row.  The critic's
    input gradient is emitted as forward nodes, so the penalty is
    differentiable with respect to the critic weights.
    """
    if z_real.shape != z_fake.shape:
        raise GraphError(
            f"gradient_penalty: shape mismatch {z_real.shape} vs "
            f"{z_fake.shape}")
    graph = z_real.graph
    eps = eps_batch if isinstance(eps_batch, Tensor) else graph.constant(
        np.asarray(eps_batch, dtype=np.float64).reshape(-1, 1))
    x_hat = ad.add(ad.mul(eps, z_real),
                   ad.mul(1.0 - eps, z_fake))
    _, grad_x = ad.input_gradient_expression(critic_layers, x_hat)
    excess = ad.row_norms(grad_x) - 1.0
    return ad.mean(ad.mul(excess, excess))


def j_overall(weights: LossWeights, terms: LossTerms) -> float:
    """Normalized combination of the four objectives.

    The mutual-information bound is maximized, so it enters negated.
    """
    w_mae, w_sim, w_mi, w_fi = weights.normalized()
    return (w_mae * terms.j_mae + w_sim * terms.j_sim
            + w_mi * (-terms.j_mi) + w_fi * terms.j_fi)
