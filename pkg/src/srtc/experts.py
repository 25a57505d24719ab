"""Expert Training: fit one generative surrogate teacher per source.

Per source dataset, a specialized network S, a generator G, and a critic
C train jointly: the critic takes ``c_step`` Wasserstein-plus-penalty
updates per batch, then one joint update trains G against regressor
fidelity, angular similarity, and (optionally) the adversarial score,
while S trains on its own localization error only.  The frozen result is
a TeacherBundle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from srtc import losses
from srtc.autodiff import Graph
from srtc.checkpoint import load_checkpoint, save_checkpoint
from srtc.data import FingerprintDataset
from srtc.nets import (Critic, Generator, Mlp, SpecializedNetwork,
                       build_critic, build_generator, build_specialized,
                       ensure_same_repr, mlp_from_tensors)
from srtc.optim import AdamState, adam_step
from srtc.seeding import derive_seed

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Aborted training step (non-finite loss), with diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class ExpertConfig:
    epochs: int = 200
    lr: float = 1e-3
    c_step: int = 5
    alpha_margin: float = 0.2
    alpha_gp: float = 10.0
    betas: tuple[float, float, float] = (1.0, 1.0, 1.0)
    batch_size: int = 128
    seed: int = 0
    adversarial: bool = True
    hidden: int = 128
    d_repr: int = 64
    d_noise: int = 64

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.c_step < 1:
            raise ValueError(f"c_step must be >= 1, got {self.c_step}")
        if self.batch_size < 2:
            raise ValueError(
                f"batch_size must be >= 2, got {self.batch_size}")
        if self.alpha_gp < 0 or any(b < 0 for b in self.betas):
            raise ValueError("loss weights must be nonnegative")


@dataclass
class TeacherBundle:
    """Frozen surrogate teacher plus the networks it was trained with."""

    generator: Generator
    critic: Critic
    specialized: SpecializedNetwork
    source_name: str
    n_anchors: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def d_repr(self) -> int:
        return self.generator.d_repr


def critic_update_step(critic: Critic, specialized: SpecializedNetwork,
                       generator: Generator, batch_x: np.ndarray,
                       noise: np.ndarray, eps_batch: np.ndarray,
                       config: ExpertConfig,
                       adam: AdamState) -> dict[str, float]:
    """One critic update: Wasserstein loss plus weighted gradient penalty.

    S and G forward as frozen constants, so only the critic moves.
    """
    g = Graph()
    cb = critic.bind(g, trainable=True, prefix="critic.")
    sb = specialized.bind(g, trainable=False, prefix="s.")
    gb = generator.bind(g, trainable=False, prefix="g.")
    _, z_s, _ = SpecializedNetwork.forward(sb, g.constant(batch_x))
    _, z_g = Generator.forward(gb, g.constant(noise))
    real = Critic.forward(cb, z_s)
    fake = Critic.forward(cb, z_g)
    w_loss = losses.critic_loss(real, fake)
    gp = losses.gradient_penalty(cb, z_s, z_g, eps_batch)
    total = w_loss + config.alpha_gp * gp
    diag = {"critic_loss": w_loss.item(), "gradient_penalty": gp.item(),
            "critic_total": total.item()}
    if not np.isfinite(total.data):
        raise TrainingError("critic loss is not finite", diag)
    grads = g.backward(total)
    adam_step(critic.params("critic."), grads, adam, config.lr)
    return diag


def joint_update_step(specialized: SpecializedNetwork, generator: Generator,
                      critic: Critic, batch_x: np.ndarray,
                      batch_y: np.ndarray, noise: np.ndarray,
                      config: ExpertConfig, adam_s: AdamState,
                      adam_g: AdamState) -> dict[str, float]:
    """One joint update: G on the mixed objective, S on its own error.

    The generator objective mixes regressor fidelity of both real and
    modeled representations with the angular similarity term and, when
    enabled, the adversarial score.  Gradients of the modeled-fidelity
    term reach G through the regressor, but the regressor itself only
    ever updates on the specialized network's own localization error.
    """
    b1, b2, b3 = config.betas
    g = Graph()
    sb = specialized.bind(g, trainable=True, prefix="s.")
    gb = generator.bind(g, trainable=True, prefix="g.")
    x = g.constant(batch_x)
    y = g.constant(batch_y)
    _, z_s, y_hat_s = SpecializedNetwork.forward(sb, x)
    _, z_g = Generator.forward(gb, g.constant(noise))
    y_hat_g = Mlp.forward(sb["regressor"], z_g)

    l_s_mae = losses.j_mae(y, y_hat_s)
    l_g_mae = losses.j_mae(y, y_hat_g)
    l_sim = losses.j_sim(z_s, z_g, config.alpha_margin)
    l_tg = b1 * l_s_mae + b2 * l_g_mae + b3 * l_sim
    adv_value = 0.0
    if config.adversarial:
        cb = critic.bind(g, trainable=False, prefix="critic.")
        adv = losses.generator_adv_loss(Critic.forward(cb, z_g))
        adv_value = adv.item()
        l_tg = l_tg + adv

    diag = {"j_mae": l_s_mae.item(), "j_mae_gen": l_g_mae.item(),
            "j_sim": l_sim.item(), "generator_adv": adv_value,
            "generator_total": l_tg.item()}
    if not (np.isfinite(l_tg.data) and np.isfinite(l_s_mae.data)):
        raise TrainingError("joint loss is not finite", diag)

    grads_g = {k: v for k, v in g.backward(l_tg).items()
               if k.startswith("g.")}
    adam_step(generator.params("g."), grads_g, adam_g, config.lr)
    grads_s = {k: v for k, v in g.backward(l_s_mae, reset=True).items()
               if k.startswith("s.")}
    adam_step(specialized.params("s."), grads_s, adam_s, config.lr)
    return diag


def full_batches(m: int, batch_size: int,
                 rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled full-size batches; a dataset smaller than one batch is
    used whole."""
    size = min(batch_size, m)
    perm = rng.permutation(m)
    return [perm[i:i + size] for i in range(0, m - size + 1, size)]


def train_expert(source: FingerprintDataset, config: ExpertConfig,
                 metrics=None) -> TeacherBundle:
    """Run the full per-source phase and return the frozen bundle.

    ``metrics`` is an optional callable receiving one record per epoch.
    """
    config.validate()
    if source.n_samples == 0:
        raise ValueError("cannot train on an empty source dataset")
    specialized = build_specialized(
        source.n_anchors, config.hidden, config.d_repr,
        seed=derive_seed(config.seed, "specialized"))
    generator = build_generator(
        config.d_noise, config.hidden, config.d_repr,
        seed=derive_seed(config.seed, "generator"))
    critic = build_critic(config.d_repr, config.hidden,
                          seed=derive_seed(config.seed, "critic"))
    ensure_same_repr(specialized.d_repr, generator, critic)

    batch_rng = np.random.default_rng(derive_seed(config.seed, "batches"))
    noise_rng = np.random.default_rng(derive_seed(config.seed, "noise"))
    eps_rng = np.random.default_rng(derive_seed(config.seed, "gp_eps"))
    adam_c, adam_s, adam_g = AdamState(), AdamState(), AdamState()

    diag: dict[str, float] = {}
    for epoch in range(config.epochs):
        sums: dict[str, float] = {}
        count = 0
        for idx in full_batches(source.n_samples, config.batch_size,
                                batch_rng):
            bx, by = source.x[idx], source.y[idx]
            b = len(idx)
            for _ in range(config.c_step):
                noise = noise_rng.standard_normal((b, config.d_noise))
                eps = eps_rng.uniform(size=(b, 1))
                diag = critic_update_step(critic, specialized, generator,
                                          bx, noise, eps, config, adam_c)
                _accumulate(sums, diag)
            noise = noise_rng.standard_normal((b, config.d_noise))
            diag = joint_update_step(specialized, generator, critic, bx, by,
                                     noise, config, adam_s, adam_g)
            _accumulate(sums, diag)
            count += 1
        if metrics is not None and count:
            record = {"phase": "expert_training",
                      "source": source.name, "epoch": epoch}
            record.update(_epoch_means(sums, count, config.c_step))
            metrics(record)
    return TeacherBundle(generator, critic, specialized,
                         source_name=source.name,
                         n_anchors=source.n_anchors,
                         seed=config.seed,
                         diagnostics=diag)


def _accumulate(sums: dict[str, float], diag: dict[str, float]) -> None:
    for key, value in diag.items():
        sums[key] = sums.get(key, 0.0) + value


def _epoch_means(sums: dict[str, float], n_batches: int,
                 c_step: int) -> dict[str, float]:
    out = {}
    for key, total in sums.items():
        denom = n_batches * c_step if key.startswith(
            ("critic_", "gradient_")) else n_batches
        out[key] = total / denom
    return out


def _expert_worker(task):
    source, config = task
    records: list[dict] = []
    bundle = train_expert(source, config, metrics=records.append)
    return bundle, records


def train_experts_for_sources(sources, base_config: ExpertConfig,
                              master_seed: int, metrics=None,
                              workers: int = 1) -> list[TeacherBundle]:
    """Train one teacher per source dataset, sub-seeded from the master.

    Teachers share no state, so ``workers > 1`` trains them in separate
    processes; metric records are emitted grouped in source order either
    way, keeping the stream identical across worker counts.
    """
    from dataclasses import replace

    tasks = [(src, replace(base_config,
                           seed=derive_seed(master_seed, "expert", src.name)))
             for src in sources]
    if workers <= 1 or len(tasks) <= 1:
        return [train_expert(src, cfg, metrics=metrics)
                for src, cfg in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        results = list(pool.map(_expert_worker, tasks))
    bundles = []
    for bundle, records in results:
        bundles.append(bundle)
        if metrics is not None:
            for record in records:
                metrics(record)
    return bundles


# Teacher bundle persistence -------------------------------------------

def save_teacher_bundle(bundle: TeacherBundle, path,
                        config_digest: str = "", dtype: str = "<f8") -> None:
    tensors = {}
    tensors.update(bundle.generator.params("generator."))
    tensors.update(bundle.critic.params("critic."))
    tensors.update(bundle.specialized.params("specialized."))
    meta = {
        "kind": "teacher_bundle",
        "source_name": bundle.source_name,
        "n_anchors": bundle.n_anchors,
        "seed": bundle.seed,
        "d_noise": bundle.generator.d_noise,
        "hidden": bundle.generator.h,
        "d_repr": bundle.d_repr,
    }
    save_checkpoint(tensors, path, meta=meta, config_digest=config_digest,
                    dtype=dtype)


def load_teacher_bundle(path) -> TeacherBundle:
    tensors, meta, _ = load_checkpoint(path)
    if meta.get("kind") != "teacher_bundle":
        raise ValueError(
            f"{path}: not a teacher bundle (kind={meta.get('kind')!r})")
    generator = Generator(
        mlp_from_tensors(tensors, "generator.",
                          ["relu", "relu", "identity"]),
        d_noise=int(meta["d_noise"]))
    critic = Critic(mlp_from_tensors(tensors, "critic.",
                                      ["relu", "relu", "identity"]))
    specialized = SpecializedNetwork(
        mlp_from_tensors(tensors, "specialized.framer.", ["relu"]),
        mlp_from_tensors(tensors, "specialized.extractor.",
                          ["relu", "relu"]),
        mlp_from_tensors(tensors, "specialized.regressor.", ["identity"]))
    return TeacherBundle(generator, critic, specialized,
                         source_name=str(meta["source_name"]),
                         n_anchors=int(meta["n_anchors"]),
                         seed=int(meta["seed"]))
