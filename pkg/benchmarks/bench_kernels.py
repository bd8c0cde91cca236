"""Compare the compiled and numpy LSTM kernels on forward + backward passes.

    python benchmarks/bench_kernels.py [--batch 64] [--steps 50] [--hidden 256] [--repeat 5]
"""
import argparse
import time

import numpy as np

from sectorlstm import _kernels


def bench(kernel, x, w, u, b, dhs, repeat):
    times_f, times_b = [], []
    for _ in range(repeat):
        t0 = time.perf_counter()
        hs, cs, gates = kernel.lstm_forward(x, w, u, b)
        t1 = time.perf_counter()
        kernel.lstm_backward(x, w, u, hs, cs, gates, dhs)
        t2 = time.perf_counter()
        times_f.append(t1 - t0)
        times_b.append(t2 - t1)
    return min(times_f), min(times_b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--features", type=int, default=1)
    ap.add_argument("--hidden", type=int, nargs="+", default=[8, 32, 256])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"backends available: {sorted(_kernels.AVAILABLE)} (default: {_kernels.BACKEND})")
    print(f"{'H':>5} {'backend':>8} {'forward ms':>11} {'backward ms':>12} {'speedup':>8}")
    for hidden in args.hidden:
        x = rng.uniform(0, 1, (args.batch, args.steps, args.features))
        w = rng.normal(0, 0.1, (4 * hidden, args.features))
        u = rng.normal(0, 0.1, (4 * hidden, hidden))
        b = np.zeros(4 * hidden)
        dhs = rng.normal(0, 1, (args.batch, args.steps, hidden))
        base = None
        for name in ("python", "cython"):
            if name not in _kernels.AVAILABLE:
                print(f"{hidden:>5} {name:>8} {'n/a':>11}")
                continue
            f, bwd = bench(_kernels.AVAILABLE[name], x, w, u, b, dhs, args.repeat)
            total = f + bwd
            base = base or total
            print(f"{hidden:>5} {name:>8} {1e3 * f:>11.2f} {1e3 * bwd:>12.2f} {base / total:>7.2f}x")


if __name__ == "__main__":
    main()
