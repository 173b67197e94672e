"""Compare the numba and pure-numpy kernel backends.

Part one times each kernel from both namespaces in this process.  Part two
times a full EM fit in two subprocesses, one with ``MIXFIT_DISABLE_JIT=1``,
so the module-level backend selection is exercised as users see it.

Run with ``python3 benchmarks/bench_kernels.py [--n N] [--repeat R]``.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from mixfit import _kernels

_FIT_SNIPPET = """
import json, time
import numpy as np
from mixfit import DataBatch, FitOptions, Gaussian, Mixture, fit
from mixfit._kernels import BACKEND
rng = np.random.default_rng(0)
n = {n}
labels = rng.integers(3, size=n)
x = np.array([[-4.0, 0.0, 4.0], [0.0, 3.0, 0.0]])[:, labels] + rng.standard_normal((2, n))
data = DataBatch(x)
mix = Mixture(Gaussian(2), 3)
opts = FitOptions(seed=0, max_iters=50, tol_rel_ll=0.0)
fit(mix, data, FitOptions(seed=0, max_iters=2))
best = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter()
    report = fit(mix, data, opts)
    best = min(best, time.perf_counter() - t0)
print(json.dumps({{"backend": BACKEND, "seconds": best, "ll": report.ll_trace[-1]}}))
"""


def _kernel_inputs(n, d, k, rng):
    a = rng.standard_normal((d, d))
    chol = np.linalg.cholesky(a @ a.T + d * np.eye(d))
    diff = rng.standard_normal((d, n))
    logp = rng.standard_normal((k, n)) * 10
    w = rng.uniform(size=n)
    return {
        "mahalanobis_sq": (chol, diff),
        "log_normalize": (logp,),
        "weighted_scatter": (diff, w),
    }


def bench_kernels(n, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for d, k in [(2, 3), (10, 8)]:
        inputs = _kernel_inputs(n, d, k, rng)
        for name, args in inputs.items():
            row = {"kernel": name, "d": d, "k": k}
            for label, ns in [("numpy", _kernels.numpy_kernels), ("numba", _kernels.jit_kernels)]:
                if ns is None:
                    row[label] = float("nan")
                    continue
                func = getattr(ns, name)
                func(*args)
                row[label] = min(timeit.repeat(lambda: func(*args), number=5, repeat=repeat)) / 5
            rows.append(row)
    return rows


def bench_fit(n, repeat):
    out = {}
    for flag in ["0", "1"]:
        env = dict(os.environ, MIXFIT_DISABLE_JIT=flag)
        proc = subprocess.run(
            [sys.executable, "-c", _FIT_SNIPPET.format(n=n, repeat=repeat)],
            env=env, capture_output=True, text=True, check=True,
        )
        res = json.loads(proc.stdout.strip().splitlines()[-1])
        out[res["backend"]] = res
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=100_000, help="number of data columns")
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats (best is kept)")
    args = parser.parse_args(argv)

    print(f"kernels, n={args.n} (seconds per call, best of {args.repeat})")
    print(f"{'kernel':<18}{'d':>4}{'k':>4}{'numpy':>12}{'numba':>12}{'speedup':>9}")
    for r in bench_kernels(args.n, args.repeat):
        print(f"{r['kernel']:<18}{r['d']:>4}{r['k']:>4}{r['numpy']:>12.2e}{r['numba']:>12.2e}"
              f"{r['numpy'] / r['numba']:>9.2f}")

    print(f"\nEM fit, K=3, d=2, n={args.n}, 50 iterations")
    fits = bench_fit(args.n, max(1, args.repeat // 2))
    for backend, res in sorted(fits.items()):
        print(f"{backend:<8}{res['seconds']:>10.3f} s   final ll {res['ll']:.10f}")
    if len(fits) == 2:
        print(f"speedup {fits['numpy']['seconds'] / fits['numba']['seconds']:.2f}x")


if __name__ == "__main__":
    main()
