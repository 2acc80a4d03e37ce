#!/usr/bin/env python3
"""Benchmark the compiled LSTM-cell kernels against the numpy fallback.

The cell step (forward + backward) dominates training time, so this is the
number that decides whether the extension is worth building on a platform.

    python3 benchmarks/bench_kernels.py [--steps 2000]
"""

import argparse
import time

import numpy as np

from trajlstm.kernels import pure

try:
    from trajlstm.kernels import _lstm_ext as ext
except ImportError:
    ext = None

SIZES = [
    ("smoke", 8, 12, 6),       # input, hidden, proj
    ("toy", 16, 32, 16),
    ("medium", 40, 128, 64),
]


def bench(impl, input_dim, hidden, proj, steps, seed=0):
    rng = np.random.default_rng(seed)
    gw = rng.normal(size=(4 * hidden, input_dim + proj))
    gb = rng.normal(size=4 * hidden)
    pw = rng.normal(size=(proj, hidden))
    x = rng.normal(size=input_dim)
    c = np.zeros(hidden)
    p = np.zeros(proj)
    gc = rng.normal(size=hidden)
    gp = rng.normal(size=proj)

    t0 = time.perf_counter()
    for _ in range(steps):
        c_new, p_new, cache = impl.lstmp_forward(gw, gb, pw, x, c, p)
        impl.lstmp_backward(gw, pw, cache, gc, gp)
    elapsed = time.perf_counter() - t0
    return elapsed / steps * 1e6  # microseconds per fwd+bwd step


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=2000)
    args = parser.parse_args()

    print("%-8s %-22s %12s %12s %9s" % ("size", "dims (in/hidden/proj)",
                                        "numpy (us)", "compiled (us)", "speedup"))
    for name, d, h, r in SIZES:
        t_py = bench(pure, d, h, r, args.steps)
        if ext is None:
            print("%-8s %-22s %12.1f %12s %9s" % (name, "%d/%d/%d" % (d, h, r),
                                                  t_py, "n/a", "n/a"))
            continue
        t_c = bench(ext, d, h, r, args.steps)
        print("%-8s %-22s %12.1f %12.1f %8.1fx"
              % (name, "%d/%d/%d" % (d, h, r), t_py, t_c, t_py / t_c))
    if ext is None:
        print("compiled extension not built; install with "
              "`pip install -e . --no-build-isolation` to compare")


if __name__ == "__main__":
    main()
