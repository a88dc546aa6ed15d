"""Compare the compiled and numpy kernel backends on training-sized shapes.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times the convolution hot loops at the shapes a default training step
actually produces (32x32 images, 16-channel branches) and prints a table
with the speedup of the compiled extension over the numpy fallback.
"""

import argparse
import time

import numpy as np

from afrseg import _kernels_np

try:
    from afrseg import _kernels
except ImportError:
    _kernels = None


def timer(fn, repeat):
    fn()  # warm caches before timing
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def workloads():
    rng = np.random.default_rng(0)
    shapes = [
        ("hr conv 3->16 32x32", (1, 3, 32, 32), (16, 3, 3, 3)),
        ("hr conv 16->16 32x32", (1, 16, 32, 32), (16, 16, 3, 3)),
        ("lr conv 16->16 16x16", (1, 16, 16, 16), (16, 16, 3, 3)),
        ("eval conv 16->16 32x32 b50", (50, 16, 32, 32), (16, 16, 3, 3)),
    ]
    for name, xs, ws in shapes:
        x = rng.normal(size=xs)
        w = rng.normal(size=ws)
        bias = rng.normal(size=ws[0])
        gy = rng.normal(size=(xs[0], ws[0]) + xs[2:])
        yield f"{name} fwd", lambda impl, x=x, w=w, b=bias: impl.conv2d_forward(x, w, b)
        yield f"{name} bwd", lambda impl, x=x, w=w, g=gy: impl.conv2d_backward(x, w, g)
    k2 = rng.normal(size=(3, 3))
    x = rng.normal(size=(1, 16, 32, 32))
    gy = rng.normal(size=x.shape)
    yield "smooth 16ch 32x32 fwd", lambda impl, x=x, k=k2: impl.depthwise_forward(x, k)
    yield "smooth 16ch 32x32 bwd", lambda impl, k=k2, g=gy: impl.depthwise_backward_input(k, g)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()

    if _kernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    header = f"{'workload':<32} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fn in workloads():
        t_np = timer(lambda: fn(_kernels_np), args.repeat)
        if _kernels is None:
            print(f"{name:<32} {t_np * 1e6:>8.0f}us {'-':>10} {'-':>8}")
            continue
        t_c = timer(lambda: fn(_kernels), args.repeat)
        print(f"{name:<32} {t_np * 1e6:>8.0f}us {t_c * 1e6:>8.0f}us "
              f"{t_np / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
