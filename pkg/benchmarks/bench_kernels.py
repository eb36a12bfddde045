"""Compare the numba and numpy kernel backends on the hot operations.

Run: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from vton.kernels import _numba, _numpy

CONV_SHAPES = [
    # label, cin, h, w, cout, k, stride, pad
    ("extractor conv 32x24", 18, 32, 24, 64, 3, 2, 1),
    ("unet enc0 256x192", 90, 256, 192, 64, 3, 1, 1),
    ("unet mid 16x12", 512, 16, 12, 512, 3, 1, 1),
]

GRID_SHAPES = [
    ("warp 32x24", 3, 32, 24),
    ("warp 256x192", 3, 256, 192),
]


def _time(fn, repeat=3):
    fn()  # warm up (jit compile / cache fill)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"{'case':<34} {'numba':>10} {'numpy':>10} {'ratio':>7}")
    for label, cin, h, w, cout, k, stride, pad in CONV_SHAPES:
        x = rng.normal(size=(cin, h, w))
        wt = rng.normal(size=(cout, cin, k, k))
        b = rng.normal(size=cout)
        g = np.ascontiguousarray(
            rng.normal(size=_numpy.conv2d_forward(x, wt, b, stride, pad).shape))
        for suffix, call in (
            ("fwd", lambda m: m.conv2d_forward(x, wt, b, stride, pad)),
            ("bwd", lambda m: m.conv2d_backward(x, wt, stride, pad, g)),
        ):
            ta = _time(lambda: call(_numba))
            tb = _time(lambda: call(_numpy))
            print(f"{label + ' ' + suffix:<34} {ta * 1e3:>8.2f}ms {tb * 1e3:>8.2f}ms "
                  f"{tb / ta:>6.2f}x")
    for label, c, h, w in GRID_SHAPES:
        x = rng.normal(size=(c, h, w))
        grid = np.ascontiguousarray(rng.uniform(-1, 1, (2, h, w)))
        g = np.ascontiguousarray(rng.normal(size=(c, h, w)))
        for suffix, call in (
            ("fwd", lambda m: m.grid_sample_forward(x, grid)),
            ("bwd", lambda m: m.grid_sample_backward(x, grid, g)),
        ):
            ta = _time(lambda: call(_numba))
            tb = _time(lambda: call(_numpy))
            print(f"{label + ' ' + suffix:<34} {ta * 1e3:>8.2f}ms {tb * 1e3:>8.2f}ms "
                  f"{tb / ta:>6.2f}x")


if __name__ == "__main__":
    main()
