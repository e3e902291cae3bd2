"""Time each hot kernel under the numba and the pure-numpy backend.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. The first
numba call of each kernel is reported separately as compile time; the
table shows the best of ``repeat`` steady-state calls.
"""

import argparse
import time

import numpy as np

from mmloop import kernels


def cases(rng):
    x = rng.standard_normal((16, 56, 56, 8))
    cols = kernels.numpy_impl.im2col(x, 3, 1, 2)
    pooled, arg = kernels.numpy_impl.maxpool_forward(x, 2)
    n_pts = 16 * 360
    rows = rng.integers(0, 16, n_pts)
    cc = rng.integers(0, 224, n_pts)
    vals = rng.random(n_pts)
    img = rng.random((96, 128, 3))
    db = rng.standard_normal((5000, 128))
    q = rng.standard_normal((500, 128))
    t = np.cumsum(rng.uniform(0.2, 1.0, 3000))
    east, north = 100 * np.cos(t / 50), 100 * np.sin(t / 50)
    head = np.arctan2(np.cos(t / 50), -np.sin(t / 50))
    return {
        "im2col 3x3 s1 p2": lambda m: m.im2col(x, 3, 1, 2),
        "im2col 4x4 s4 p2": lambda m: m.im2col(x, 4, 4, 2),
        "col2im 3x3 s1 p2": lambda m: m.col2im(cols, x.shape, 3, 1, 2),
        "maxpool fwd 2x2": lambda m: m.maxpool_forward(x, 2),
        "maxpool bwd 2x2": lambda m: m.maxpool_backward(pooled, arg, x.shape, 2),
        "scatter_max 16x224": lambda m: m.scatter_max(rows, cc, vals, np.zeros((16, 224))),
        "bilinear 96x128->224": lambda m: m.bilinear_resize(img, 224, 224),
        "nearest_rows 500x5000": lambda m: m.nearest_rows(db, q),
        "greedy_places 3000": lambda m: m.greedy_places(east, north, head, 5.0, np.pi / 2),
    }


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.numba_impl is None:
        print("numba is not importable; only the numpy backend can be timed")
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<24}{'numpy ms':>10}{'numba ms':>10}{'compile s':>11}{'speedup':>9}")
    for name, call in cases(np.random.default_rng(args.seed)).items():
        t_np = best_of(lambda: call(kernels.numpy_impl), args.repeat)
        if kernels.numba_impl is None:
            print(f"{name:<24}{1e3 * t_np:>10.2f}{'-':>10}{'-':>11}{'-':>9}")
            continue
        t0 = time.perf_counter()
        call(kernels.numba_impl)
        compile_s = time.perf_counter() - t0
        t_nb = best_of(lambda: call(kernels.numba_impl), args.repeat)
        print(f"{name:<24}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{compile_s:>11.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
