"""Time conv forward/backward on the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_conv.py [--repeat 20]

Prints one row per (shape, path) with the median time in milliseconds and the
speedup of the compiled path. Both paths share the GEMM, so the difference is
the im2col/col2im data movement.
"""
import argparse
import statistics
import time

import numpy as np

from winnet import _backend, nn

# (batch, c_in, filters, size, kernel)
SHAPES = [
    (64, 1, 16, 17, 3),
    (64, 16, 16, 17, 3),
    (16, 64, 64, 41, 3),
    (8, 64, 64, 41, 7),
]


def median_ms(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return 1e3 * statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    paths = ["numpy"] + (["cython"] if _backend.compiled is not None else [])
    if len(paths) == 1:
        print("compiled kernels not built; timing the numpy path only")
    rng = np.random.default_rng(0)
    print(f"{'shape (n,c,k,hw,f)':<24}{'path':<8}{'fwd ms':>10}{'bwd ms':>10}{'fwd x':>8}{'bwd x':>8}")
    for n, c, k, s, f in SHAPES:
        x = rng.standard_normal((n, c, s, s))
        p = nn.ConvParams(rng.standard_normal((k, c, f, f)), rng.standard_normal(k))
        g = rng.standard_normal((n, k, s, s))
        base = None
        for path in paths:
            fwd = median_ms(lambda: nn.conv2d_forward(x, p, method=path), args.repeat)
            bwd = median_ms(lambda: nn.conv2d_backward(x, p, g, method=path), args.repeat)
            if base is None:
                base = (fwd, bwd)
            print(f"{str((n, c, k, s, f)):<24}{path:<8}{fwd:>10.2f}{bwd:>10.2f}"
                  f"{base[0] / fwd:>8.2f}{base[1] / bwd:>8.2f}")


if __name__ == "__main__":
    main()
