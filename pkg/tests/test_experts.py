"""Expert Training phase: step contracts, frozen-parameter guarantees,
determinism, and trainability properties."""

import numpy as np
import pytest

from srtc.data import (EnvironmentConfig, generate_environment,
                       normalize_rss, sample_fingerprints)
from srtc.experts import (ExpertConfig, critic_update_step, full_batches,
                          joint_update_step, train_expert,
                          train_experts_for_sources)
from srtc.nets import build_critic, build_generator, build_specialized
from srtc.optim import AdamState


def toy_source(n_anchors=6, m=64, seed=0, noise=1.0, dropout=0.05):
    env = generate_environment(
        EnvironmentConfig(n_anchors=n_anchors, noise_std_db=noise,
                          dropout_prob=dropout), seed=seed)
    return normalize_rss(sample_fingerprints(env, m, seed=seed + 1,
                                             name=f"src{seed}"))


def small_config(**overrides):
    base = dict(epochs=2, batch_size=16, seed=0, hidden=16, d_repr=8,
                d_noise=8)
    base.update(overrides)
    return ExpertConfig(**base)


def tiny_nets(seed=0):
    s = build_specialized(6, 16, 8, seed=seed)
    g = build_generator(8, 16, 8, seed=seed + 1)
    c = build_critic(8, 16, seed=seed + 2)
    return s, g, c


def params_snapshot(net, prefix=""):
    return {k: v.copy() for k, v in net.params(prefix).items()}


def assert_params_equal(a, b):
    assert set(a) == set(b)
    for k in a:
        assert np.array_equal(a[k], b[k]), k


def assert_params_differ(a, b):
    assert any(not np.array_equal(a[k], b[k]) for k in a)


class TestCriticUpdate:
    def test_smoke_finite_diagnostics(self, rng):
        s, g, c = tiny_nets()
        cfg = small_config()
        diag = critic_update_step(c, s, g, rng.uniform(size=(16, 6)),
                                  rng.standard_normal((16, 8)),
                                  rng.uniform(size=(16, 1)), cfg,
                                  AdamState())
        assert np.isfinite(list(diag.values())).all()

    def test_penalty_off_total_equals_wasserstein(self, rng):
        s, g, c = tiny_nets()
        cfg = small_config(alpha_gp=0.0)
        diag = critic_update_step(c, s, g, rng.uniform(size=(16, 6)),
                                  rng.standard_normal((16, 8)),
                                  rng.uniform(size=(16, 1)), cfg,
                                  AdamState())
        assert diag["critic_total"] == diag["critic_loss"]

    def test_only_critic_moves(self, rng):
        s, g, c = tiny_nets()
        before_s, before_g = params_snapshot(s), params_snapshot(g)
        before_c = params_snapshot(c)
        critic_update_step(c, s, g, rng.uniform(size=(16, 6)),
                           rng.standard_normal((16, 8)),
                           rng.uniform(size=(16, 1)), small_config(),
                           AdamState())
        assert_params_equal(before_s, s.params())
        assert_params_equal(before_g, g.params())
        assert_params_differ(before_c, c.params())

    def test_loss_decreases_on_fixed_batch(self):
        decreased = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            s = build_specialized(6, 16, 8, seed=seed)
            g = build_generator(8, 16, 8, seed=seed + 100)
            c = build_critic(8, 16, seed=seed + 200)
            cfg = small_config(seed=seed)
            bx = rng.uniform(size=(16, 6))
            noise = rng.standard_normal((16, 8))
            eps = rng.uniform(size=(16, 1))
            adam = AdamState()
            first = last = None
            for step in range(50):
                diag = critic_update_step(c, s, g, bx, noise, eps, cfg, adam)
                first = diag["critic_total"] if step == 0 else first
                last = diag["critic_total"]
            decreased.append(last < first)
        assert sum(decreased) >= 3  # median over 5 seeds decreases


class TestJointUpdate:
    def _step(self, s, g, c, bx, by, noise, cfg):
        return joint_update_step(s, g, c, bx, by, noise, cfg, AdamState(),
                                 AdamState())

    def test_perfect_regressor_gives_zero_own_loss(self, rng):
        s, g, c = tiny_nets()
        bx = rng.uniform(size=(16, 6))
        by = s.predict(bx)
        diag = self._step(s, g, c, bx, by, rng.standard_normal((16, 8)),
                          small_config())
        assert diag["j_mae"] == 0.0

    def test_generator_inert_without_its_terms(self, rng):
        s, g, c = tiny_nets()
        before_g = params_snapshot(g)
        cfg = small_config(betas=(1.0, 0.0, 0.0), adversarial=False)
        self._step(s, g, c, rng.uniform(size=(16, 6)),
                   rng.uniform(size=(16, 2)), rng.standard_normal((16, 8)),
                   cfg)
        assert_params_equal(before_g, g.params())

    def test_critic_never_moves_in_joint_step(self, rng):
        s, g, c = tiny_nets()
        before_c = params_snapshot(c)
        self._step(s, g, c, rng.uniform(size=(16, 6)),
                   rng.uniform(size=(16, 2)), rng.standard_normal((16, 8)),
                   small_config(adversarial=True))
        assert_params_equal(before_c, c.params())

    def test_specialized_update_ignores_generator_fidelity(self, rng):
        # identical S updates whether or not the modeled-representation
        # fidelity term is switched on
        bx = rng.uniform(size=(16, 6))
        by = rng.uniform(size=(16, 2))
        noise = rng.standard_normal((16, 8))
        results = []
        for beta2 in (0.0, 1.0):
            s, g, c = tiny_nets()
            cfg = small_config(betas=(1.0, beta2, 1.0))
            self._step(s, g, c, bx, by, noise, cfg)
            results.append(params_snapshot(s))
        assert_params_equal(results[0], results[1])

    def test_generator_moves_with_its_terms(self, rng):
        s, g, c = tiny_nets()
        before_g = params_snapshot(g)
        self._step(s, g, c, rng.uniform(size=(16, 6)),
                   rng.uniform(size=(16, 2)), rng.standard_normal((16, 8)),
                   small_config())
        assert_params_differ(before_g, g.params())


class TestTrainExpert:
    def test_zero_epochs_returns_initialized_bundle(self):
        source = toy_source()
        cfg = small_config(epochs=0)
        bundle = train_expert(source, cfg)
        from srtc.seeding import derive_seed
        fresh = build_specialized(6, 16, 8,
                                  seed=derive_seed(0, "specialized"))
        assert_params_equal(bundle.specialized.params(), fresh.params())

    def test_same_seed_bitwise_identical(self):
        source = toy_source()
        cfg = small_config(epochs=2)
        a = train_expert(source, cfg)
        b = train_expert(source, cfg)
        assert_params_equal(a.generator.params(), b.generator.params())
        assert_params_equal(a.critic.params(), b.critic.params())
        assert_params_equal(a.specialized.params(), b.specialized.params())

    def test_metrics_one_record_per_epoch(self):
        source = toy_source()
        records = []
        train_expert(source, small_config(epochs=3), metrics=records.append)
        assert [r["epoch"] for r in records] == [0, 1, 2]
        assert all(r["phase"] == "expert_training" for r in records)
        assert all("j_mae" in r and "critic_loss" in r for r in records)

    def test_empty_source_rejected(self):
        from srtc.data import FingerprintDataset
        empty = FingerprintDataset(np.zeros((0, 4)), np.zeros((0, 2)))
        with pytest.raises(ValueError, match="empty"):
            train_expert(empty, small_config())

    def test_alignment_improves_and_sim_drops(self):
        # 2-anchor toy source: the angular loss falls well under 0.1
        source = toy_source(n_anchors=2, m=128, seed=3)
        cfg = small_config(epochs=40, batch_size=32, alpha_margin=0.0,
                           hidden=32, d_repr=16, d_noise=16)
        records = []
        train_expert(source, cfg, metrics=records.append)
        assert records[-1]["j_sim"] < 0.1
        assert records[-1]["j_sim"] < records[0]["j_sim"]

    def test_config_validation(self):
        with pytest.raises(ValueError, match="c_step"):
            small_config(c_step=0).validate()
        with pytest.raises(ValueError, match="batch_size"):
            small_config(batch_size=1).validate()
        with pytest.raises(ValueError, match="lr"):
            small_config(lr=0.0).validate()


class TestBatching:
    def test_full_batches_drop_remainder(self):
        rng = np.random.default_rng(0)
        batches = full_batches(100, 32, rng)
        assert [len(b) for b in batches] == [32, 32, 32]
        seen = np.concatenate(batches)
        assert len(np.unique(seen)) == 96

    def test_small_dataset_used_whole(self):
        rng = np.random.default_rng(0)
        batches = full_batches(10, 32, rng)
        assert [len(b) for b in batches] == [10]


class TestMultiTeacher:
    def test_sources_trained_independently_and_in_order(self):
        sources = [toy_source(seed=1), toy_source(seed=2)]
        cfg = small_config(epochs=2)
        records = []
        bundles = train_experts_for_sources(sources, cfg, master_seed=9,
                                            metrics=records.append)
        assert [b.source_name for b in bundles] == ["src1", "src2"]
        names = [r["source"] for r in records]
        assert names == ["src1", "src1", "src2", "src2"]
        # per-source seeds differ, so parameters differ
        assert_params_differ(bundles[0].generator.params(),
                             bundles[1].generator.params())

    def test_parallel_workers_match_sequential(self):
        sources = [toy_source(seed=1), toy_source(seed=2)]
        cfg = small_config(epochs=1)
        seq_records, par_records = [], []
        seq = train_experts_for_sources(sources, cfg, 9,
                                        metrics=seq_records.append,
                                        workers=1)
        par = train_experts_for_sources(sources, cfg, 9,
                                        metrics=par_records.append,
                                        workers=2)
        assert seq_records == par_records
        for a, b in zip(seq, par):
            assert_params_equal(a.generator.params(), b.generator.params())
