#!/usr/bin/env python3
"""Benchmark the compiled convolution kernels against the NumPy fallback.

Runs im2col/col2im on the shapes that occur in each built-in architecture
and one full training step per local dimension, printing a comparison
table. Select backends per process via QENT_KERNELS; this script compares
both in-process by calling the implementations directly.
"""

import time

import numpy as np

from qent.kernels import BACKEND, numpy_backend

try:
    from qent.kernels import _convkern

    HAVE_COMPILED = True
except ImportError:
    _convkern = None
    HAVE_COMPILED = False


def _time(fn, repeats=20):
    fn()  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1000.0


def bench_kernels():
    shapes = [
        # (label, N, C, H, k, s) taken from the encoder stacks
        ("d=3 conv1", 128, 2, 11, 3, 2),
        ("d=3 conv2", 128, 150, 7, 3, 2),
        ("d=3 conv3", 128, 100, 5, 3, 2),
        ("d=5 conv2", 64, 200, 17, 5, 2),
        ("d=7 conv2", 16, 70, 39, 15, 4),
    ]
    print(f"{'shape':<12} {'im2col np':>10} {'im2col cy':>10} {'col2im np':>10} {'col2im cy':>10}  (ms)")
    for label, n, c, h, k, s in shapes:
        x = np.random.default_rng(0).standard_normal((n, c, h, h)).astype(np.float32)
        oh = (h - k) // s + 1
        cols = numpy_backend.im2col(x, k, k, s, s)
        row = [f"{label:<12}"]
        row.append(f"{_time(lambda: numpy_backend.im2col(x, k, k, s, s)):>10.3f}")
        if HAVE_COMPILED:
            row.append(f"{_time(lambda: _convkern.im2col(x, k, k, s, s)):>10.3f}")
        else:
            row.append(f"{'n/a':>10}")
        row.append(f"{_time(lambda: numpy_backend.col2im(cols, n, c, h, h, k, k, s, s)):>10.3f}")
        if HAVE_COMPILED:
            row.append(f"{_time(lambda: _convkern.col2im(cols, n, c, h, h, k, k, s, s)):>10.3f}")
        else:
            row.append(f"{'n/a':>10}")
        print(" ".join(row))
        if HAVE_COMPILED:
            a = _convkern.im2col(x, k, k, s, s)
            assert np.array_equal(a, cols), "backends disagree on im2col"


def bench_training_step():
    import qent.kernels as kernels
    from qent import nn
    from qent.cae import CaeModel, builtin_spec

    print(f"\nactive backend: {BACKEND}")
    print(f"{'arch':<6} {'fwd+bwd step (ms)':>18}")
    for d in (2, 3, 4):
        side = d * d
        model = CaeModel.build(builtin_spec(d), seed=0)
        data = np.random.default_rng(1).standard_normal((16, 2, side, side)).astype(np.float32)
        opt = nn.Adam(model.parameters(), 1e-4)
        rng = np.random.default_rng(2)

        def step():
            xb = nn.Tensor(data)
            loss = nn.l1_loss(model.forward(xb, training=True, rng=rng), xb)
            loss.backward()
            opt.step()
            opt.zero_grad()

        print(f"d={d:<4} {_time(step, repeats=10):>18.1f}")


if __name__ == "__main__":
    bench_kernels()
    bench_training_step()
