"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--batch 20]

Shapes follow the real workloads: col2im and max-pool at the CNN's
conv2 / pool sizes, asynchronous sweeps at N=100 with 14 stored patterns.
"""
import argparse
import time

import numpy as np

from hopfield_robust import _kernels as K


def timeit(fn, repeat):
    fn()  # warm-up (triggers numba compilation)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(batch, rng):
    cols = rng.standard_normal((batch, 24, 24, 3, 3, 32))
    x = rng.standard_normal((batch, 24, 24, 64))
    out, idx = K.NUMPY_KERNELS["maxpool_forward"](x, 2, 2, 2)
    dout = rng.standard_normal(out.shape)
    patterns = np.where(rng.random((14, 100)) < 0.5, -1.0, 1.0)
    w = patterns.T @ patterns
    np.fill_diagonal(w, 0.0)
    sigma = np.where(rng.random(100) < 0.5, -1.0, 1.0)
    order = rng.permutation(100).astype(np.int64)
    return {
        "col2im": lambda k: k["col2im"](cols, 26, 26, 1),
        "maxpool_forward": lambda k: k["maxpool_forward"](x, 2, 2, 2),
        "maxpool_backward": lambda k: k["maxpool_backward"](dout, idx, 24, 24, 2, 2, 2),
        "async_sweep": lambda k: k["async_sweep"](sigma.copy(), w, order),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, run in cases(args.batch, rng).items():
        t_np = timeit(lambda: run(K.NUMPY_KERNELS), args.repeat)
        t_nb = timeit(lambda: run(K.NUMBA_KERNELS), args.repeat)
        print(f"{name:<18}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
