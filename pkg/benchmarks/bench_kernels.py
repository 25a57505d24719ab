"""Benchmark the compiled kernel backend against the numpy fallback.

Times each hot kernel on training-realistic shapes, then a full
expert-training step end to end under both backends.  Matrix products go
through numpy/BLAS in both, so the delta isolates the elementwise and
Adam loops.

Run:  python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from srtc._kernels import _numpy

try:
    from srtc._kernels import _speed
except ImportError:
    _speed = None

SHAPES = [(128, 128), (128, 64), (512, 128), (2048, 64)]


def time_call(fn, *args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats: int) -> None:
    rng = np.random.default_rng(0)
    header = f"{'kernel':<14}{'shape':<12}{'numpy':>10}{'cython':>10}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for shape in SHAPES:
        x = rng.normal(size=shape)
        g = rng.normal(size=shape)
        y = np.tanh(x)
        cases = [
            ("relu_fwd", (x,)),
            ("relu_bwd", (g, x)),
            ("tanh_fwd", (x,)),
            ("tanh_bwd", (g, y)),
            ("softplus_fwd", (x,)),
            ("softplus_bwd", (g, x)),
        ]
        for name, args in cases:
            t_np = time_call(getattr(_numpy, name), *args, repeats=repeats)
            if _speed is None:
                print(f"{name:<14}{str(shape):<12}{t_np * 1e6:>9.1f}u"
                      f"{'n/a':>10}{'':>9}")
                continue
            t_cy = time_call(getattr(_speed, name), *args, repeats=repeats)
            print(f"{name:<14}{str(shape):<12}{t_np * 1e6:>9.1f}u"
                  f"{t_cy * 1e6:>9.1f}u{t_np / t_cy:>8.2f}x")

    # fused Adam on a typical parameter block
    shape = (128, 128)
    for impl, label in ((_numpy, "numpy"), (_speed, "cython")):
        if impl is None:
            continue
        p = rng.normal(size=shape)
        m = np.zeros(shape)
        v = np.zeros(shape)
        grad = rng.normal(size=shape)
        t = time_call(impl.adam_update, p, grad, m, v, 5, 1e-3, 0.9, 0.999,
                      1e-8, repeats=repeats)
        print(f"{'adam_update':<14}{str(shape):<12}{label:>8}"
              f"{t * 1e6:>9.1f}u")


def bench_training_step(repeats: int) -> None:
    """End-to-end expert-training step under the active backend.

    Set SRTC_KERNELS=numpy / cython and rerun to compare; the backend is
    fixed at import time.
    """
    from srtc import active_backend
    from srtc.data import (EnvironmentConfig, generate_environment,
                           normalize_rss, sample_fingerprints)
    from srtc.experts import (ExpertConfig, critic_update_step,
                              joint_update_step)
    from srtc.nets import build_critic, build_generator, build_specialized
    from srtc.optim import AdamState

    env = generate_environment(EnvironmentConfig(n_anchors=32), seed=0)
    ds = normalize_rss(sample_fingerprints(env, 128, seed=1))
    cfg = ExpertConfig(batch_size=128, hidden=128, d_repr=64, d_noise=64)
    s = build_specialized(32, 128, 64, seed=0)
    g = build_generator(64, 128, 64, seed=1)
    c = build_critic(64, 128, seed=2)
    rng = np.random.default_rng(3)
    adam_c, adam_s, adam_g = AdamState(), AdamState(), AdamState()

    def one_step():
        noise = rng.standard_normal((128, 64))
        eps = rng.uniform(size=(128, 1))
        critic_update_step(c, s, g, ds.x, noise, eps, cfg, adam_c)
        joint_update_step(s, g, c, ds.x, ds.y, noise, cfg, adam_s, adam_g)

    one_step()  # warm up
    t0 = time.perf_counter()
    n = max(10, repeats // 10)
    for _ in range(n):
        one_step()
    per = (time.perf_counter() - t0) / n
    print(f"\ntraining step (backend={active_backend()}): "
          f"{per * 1e3:.2f} ms/step")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    if _speed is None:
        print("compiled kernels unavailable; numpy timings only\n")
    bench_kernels(args.repeats)
    bench_training_step(args.repeats)


if __name__ == "__main__":
    main()
