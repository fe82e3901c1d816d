"""Compare the compiled kernels with the numpy fallback at training sizes.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from moegan import _pykernels

try:
    from moegan import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    f32 = np.float32
    b, d = 64, 32
    gx = rng.standard_normal((b, 3 * d)).astype(f32)
    gh = rng.standard_normal((b, 3 * d)).astype(f32)
    h = rng.standard_normal((b, d)).astype(f32)
    _, r, z, n = _pykernels.gru_forward(gx, gh, h)
    dh = rng.standard_normal((b, d)).astype(f32)
    x = rng.standard_normal((64, 12, 64)).astype(f32)
    w = rng.standard_normal((5, 64, 300)).astype(f32)
    y = rng.standard_normal((64, 8, 300)).astype(f32)
    _, idx = _pykernels.max_over_time(y)
    g = rng.standard_normal((64, 300)).astype(f32)
    size = 1_440_000
    p, grad = rng.standard_normal(size).astype(f32), rng.standard_normal(size).astype(f32)
    m, v = np.zeros(size, f32), np.zeros(size, f32)
    return {
        "gru_forward (64x32)": ("gru_forward", (gx, gh, h)),
        "gru_backward (64x32)": ("gru_backward", (dh, gh, h, r, z, n)),
        "max_over_time (64x8x300)": ("max_over_time", (y,)),
        "conv_max_backward (k=5, 300 ch)": ("conv_max_backward", (x, w, idx, g)),
        "adam_update (1.44M)": ("adam_update", (p, grad, m, v, 1e-4, 0.9, 0.999, 1e-8, 0.1, 0.001)),
        "sum_squares (1.44M)": ("sum_squares", (grad,)),
    }


def bench(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, (name, call_args) in cases(rng).items():
        py = bench(getattr(_pykernels, name), call_args, args.repeat) * 1e3
        if _ckernels is None:
            print(f"{label:34s} {py:10.3f} {'n/a':>10s} {'':>8s}")
            continue
        cy = bench(getattr(_ckernels, name), call_args, args.repeat) * 1e3
        print(f"{label:34s} {py:10.3f} {cy:10.3f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
