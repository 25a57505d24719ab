"""Expert Distilling: train a target network against frozen teachers.

Each batch builds one graph: the target network's triple (framer
features, representation, prediction), then per teacher a fresh-noise
forward and the enabled constraint terms (angular similarity, the
mutual-information bound through one global statistic network, and the
block-spectral-norm difference).  A single Adam step moves the target
and the statistic network together on the normalized overall loss;
teacher parameters enter the graph as constants and can never move.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from srtc import lipschitz, losses
from srtc.autodiff import Graph, Tensor
from srtc.checkpoint import load_checkpoint, save_checkpoint
from srtc.data import FingerprintDataset
from srtc.evaluation import EvalReport, evaluate
from srtc.experts import TeacherBundle
from srtc.losses import LossTerms, LossWeights
from srtc.nets import (Generator, MIEstimator, SpecializedNetwork,
                       build_mi_estimator, build_specialized,
                       ensure_same_repr, mlp_from_tensors)
from srtc.optim import AdamState, adam_step
from srtc.seeding import derive_seed

log = logging.getLogger(__name__)

ALL_CONSTRAINTS = frozenset({"sim", "mi", "fi"})

# Table-style ablation grid: none, each single constraint, the sim+mi
# pair, and all three.
DEFAULT_ABLATION_MASKS = (
    frozenset(),
    frozenset({"sim"}),
    frozenset({"mi"}),
    frozenset({"sim", "mi"}),
    frozenset({"fi"}),
    ALL_CONSTRAINTS,
)


@dataclass
class DistillConfig:
    epochs: int = 200
    lr: float = 1e-3
    weights: LossWeights = field(default_factory=LossWeights)
    alpha_margin: float = 0.2
    batch_size: int = 128
    power_iters: int = lipschitz.TRAIN_POWER_ITERS
    seed: int = 0
    constraints: frozenset[str] = ALL_CONSTRAINTS
    hidden: int = 128
    d_repr: int = 64

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 2:
            raise ValueError(
                f"batch_size must be >= 2, got {self.batch_size}")
        if self.power_iters < 1:
            raise ValueError(
                f"power_iters must be >= 1, got {self.power_iters}")
        unknown = set(self.constraints) - ALL_CONSTRAINTS
        if unknown:
            raise ValueError(f"unknown constraints: {sorted(unknown)}")
        if self.weights.w_mae <= 0:
            raise ValueError("the localization term must stay enabled "
                             "(w_mae > 0)")

    def effective_weights(self) -> LossWeights:
        """Weights with disabled constraints zeroed, ready to normalize."""
        return LossWeights(
            w_mae=self.weights.w_mae,
            w_sim=self.weights.w_sim if "sim" in self.constraints else 0.0,
            w_mi=self.weights.w_mi if "mi" in self.constraints else 0.0,
            w_fi=self.weights.w_fi if "fi" in self.constraints else 0.0,
        )


def _check_teachers(d_repr: int, teachers: list[TeacherBundle],
                    constraints: frozenset[str]) -> None:
    if constraints and not teachers:
        raise ValueError(
            f"constraints {sorted(constraints)} need at least one teacher")
    ensure_same_repr(d_repr, *[t.generator for t in teachers])


def distill_batch_loss(specialized: SpecializedNetwork,
                       teachers: list[TeacherBundle],
                       estimator: MIEstimator,
                       batch_x: np.ndarray, batch_y: np.ndarray,
                       noises: list[np.ndarray],
                       power_starts: list[np.ndarray] | None,
                       config: DistillConfig
                       ) -> tuple[Tensor, LossTerms]:
    """Assemble one batch's overall loss on a fresh graph.

    ``noises`` holds one fresh draw per teacher; ``power_starts`` holds
    the power-iteration start vectors (target first, then one per
    teacher) and may be None when the functional term is disabled.
    Returns the scalar loss tensor (its graph carries the gradients) and
    the plain-float terms.
    """
    constraints = config.constraints
    if "mi" in constraints and batch_x.shape[0] < 2:
        raise ValueError("the mutual-information term needs batches of "
                         "at least two rows")
    _check_teachers(specialized.d_repr, teachers, constraints)

    g = Graph()
    sb = specialized.bind(g, trainable=True, prefix="s.")
    z_f, z_e, y_hat = SpecializedNetwork.forward(sb, g.constant(batch_x))
    jmae_t = losses.j_mae(g.constant(batch_y), y_hat)

    pb = None
    if "mi" in constraints:
        pb = estimator.bind(g, trainable=True, prefix="psi.")
        shifted = losses.cyclic_shift_pairing(z_e)

    sn_s = None
    if "fi" in constraints:
        sn_s = lipschitz.block_spectral_norm(
            z_f, z_e, config.power_iters, power_starts[0])

    terms = LossTerms(j_mae=jmae_t.item())
    sim_total = mi_total = fi_total = None
    active_teachers = teachers if constraints else []
    if active_teachers and len(noises) != len(active_teachers):
        raise ValueError(
            f"need one noise draw per teacher: got {len(noises)} for "
            f"{len(active_teachers)} teachers")
    for i, teacher in enumerate(active_teachers):
        gb = teacher.generator.bind(g, trainable=False, prefix=f"t{i}.")
        zg_f, zg_e = Generator.forward(gb, g.constant(noises[i]))
        if "sim" in constraints:
            term = losses.j_sim(z_e, zg_e, config.alpha_margin)
            terms.sim_per_teacher.append(term.item())
            sim_total = term if sim_total is None else sim_total + term
        if "mi" in constraints:
            joint = MIEstimator.forward(pb, zg_e, z_e)
            product = MIEstimator.forward(pb, zg_e, shifted)
            term = losses.j_mi_term(joint, product)
            terms.mi_per_teacher.append(term.item())
            mi_total = term if mi_total is None else mi_total + term
        if "fi" in constraints:
            sn_g = lipschitz.block_spectral_norm(
                zg_f, zg_e, config.power_iters, power_starts[1 + i])
            term = lipschitz.j_fi(sn_s, [sn_g])
            terms.fi_per_teacher.append(term.item())
            fi_total = term if fi_total is None else fi_total + term

    w_mae, w_sim, w_mi, w_fi = config.effective_weights().normalized()
    loss = w_mae * jmae_t
    if sim_total is not None:
        terms.j_sim = sim_total.item()
        loss = loss + w_sim * sim_total
    if mi_total is not None:
        terms.j_mi = mi_total.item()
        loss = loss + w_mi * (-mi_total)
    if fi_total is not None:
        terms.j_fi = fi_total.item()
        loss = loss + w_fi * fi_total
    terms.validate()
    return loss, terms


def distill(target_train: FingerprintDataset,
            teachers: list[TeacherBundle], config: DistillConfig,
            metrics=None) -> tuple[SpecializedNetwork, MIEstimator]:
    """Train the target network against frozen teachers.

    Teachers are read-only throughout; only their generators forward.
    Returns the trained network and the statistic network.
    """
    from srtc.experts import full_batches

    config.validate()
    if target_train.n_samples == 0:
        raise ValueError("cannot distill on an empty target dataset")
    _check_teachers(config.d_repr, teachers, config.constraints)

    specialized = build_specialized(
        target_train.n_anchors, config.hidden, config.d_repr,
        seed=derive_seed(config.seed, "target_specialized"))
    estimator = build_mi_estimator(
        config.d_repr, config.hidden,
        seed=derive_seed(config.seed, "mi_estimator"))

    batch_rng = np.random.default_rng(derive_seed(config.seed, "batches"))
    noise_rng = np.random.default_rng(derive_seed(config.seed, "noise"))
    power_rng = np.random.default_rng(derive_seed(config.seed, "power"))
    adam = AdamState()
    needs_teachers = bool(config.constraints) and len(teachers) > 0

    trainable = specialized.params("s.")
    if "mi" in config.constraints:
        trainable = {**trainable, **estimator.params("psi.")}

    for epoch in range(config.epochs):
        term_sums = np.zeros(4)
        overall_sum = 0.0
        per_teacher_sums = {"sim": None, "mi": None, "fi": None}
        count = 0
        for idx in full_batches(target_train.n_samples, config.batch_size,
                                batch_rng):
            bx, by = target_train.x[idx], target_train.y[idx]
            noises = []
            starts = None
            if needs_teachers:
                noises = [
                    noise_rng.standard_normal((len(idx),
                                               t.generator.d_noise))
                    for t in teachers]
            if "fi" in config.constraints:
                starts = [power_rng.standard_normal((config.d_repr, 1))
                          for _ in range(1 + len(teachers))]
            loss, terms = distill_batch_loss(
                specialized, teachers, estimator, bx, by, noises, starts,
                config)
            if not np.isfinite(loss.data):
                raise RuntimeError(
                    f"distilling loss is not finite at epoch {epoch}")
            grads = loss.graph.backward(loss)
            adam_step(trainable, grads, adam, config.lr)
            term_sums += (terms.j_mae, terms.j_sim, terms.j_mi, terms.j_fi)
            overall_sum += loss.item()
            for key, values in (("sim", terms.sim_per_teacher),
                                ("mi", terms.mi_per_teacher),
                                ("fi", terms.fi_per_teacher)):
                if values:
                    acc = per_teacher_sums[key]
                    per_teacher_sums[key] = (
                        np.array(values) if acc is None
                        else acc + np.array(values))
            count += 1
        if metrics is not None and count:
            means = term_sums / count
            record = {
                "phase": "distilling", "epoch": epoch,
                "j_mae": means[0], "j_sim": means[1],
                "j_mi": means[2], "j_fi": means[3],
                "j_overall": overall_sum / count,
                "per_teacher": {
                    key: (acc / count).tolist()
                    for key, acc in per_teacher_sums.items()
                    if acc is not None
                },
            }
            metrics(record)
    return specialized, estimator


def ablate(target_train: FingerprintDataset, target_test: FingerprintDataset,
           teachers: list[TeacherBundle], config: DistillConfig,
           masks=DEFAULT_ABLATION_MASKS, thresholds=(10.0,), metrics=None
           ) -> list[tuple[frozenset[str], EvalReport]]:
    """Run distill once per constraint mask and evaluate each model."""
    seen = set()
    for mask in masks:
        mask = frozenset(mask)
        if not mask <= ALL_CONSTRAINTS:
            raise ValueError(f"invalid constraint mask {sorted(mask)}")
        if mask in seen:
            raise ValueError(f"duplicate constraint mask {sorted(mask)}")
        seen.add(mask)
    grid = []
    for mask in masks:
        run_config = replace(config, constraints=frozenset(mask))
        model, _ = distill(target_train, teachers, run_config,
                           metrics=metrics)
        report = evaluate(model, target_test, thresholds=thresholds,
                          model_name=f"mask={'+'.join(sorted(mask)) or 'none'}")
        grid.append((frozenset(mask), report))
    return grid


# Distilled model persistence ------------------------------------------

def save_specialized_model(model: SpecializedNetwork, path,
                           config_digest: str = "",
                           dtype: str = "<f8") -> None:
    meta = {
        "kind": "specialized_model",
        "n_anchors": model.n_inputs,
        "hidden": model.framer.out_width,
        "d_repr": model.d_repr,
    }
    save_checkpoint(model.params(), path, meta=meta,
                    config_digest=config_digest, dtype=dtype)


def load_specialized_model(path) -> SpecializedNetwork:
    tensors, meta, _ = load_checkpoint(path)
    if meta.get("kind") != "specialized_model":
        raise ValueError(
            f"{path}: not a specialized model (kind={meta.get('kind')!r})")
    return SpecializedNetwork(
        mlp_from_tensors(tensors, "framer.", ["relu"]),
        mlp_from_tensors(tensors, "extractor.", ["relu", "relu"]),
        mlp_from_tensors(tensors, "regressor.", ["identity"]))
