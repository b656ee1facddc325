#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot kernels on the desk-scale workload shape (batch 64,
20 features, one hidden layer of 32, 3 classes) plus a larger shape, and
reports per-call latency and speedup.  Select the backend used by the
package itself with FEDSSL_BACKEND=numpy|numba.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fedssl.kernels import get_backend

SHAPES = (
    ("desk (64x20, h32, c3)", 64, 20, (32,), 3),
    ("wide (256x50, h64x64, c10)", 256, 50, (64, 64), 10),
)


def _make_workload(batch: int, dim: int, hidden: tuple[int, ...], classes: int, seed: int):
    rng = np.random.default_rng(seed)
    dims = np.array([dim, *hidden, classes], dtype=np.int64)
    n_params = sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1))
    values = rng.standard_normal(n_params) * 0.3
    x = np.ascontiguousarray(rng.standard_normal((batch, dim)))
    labels = rng.integers(0, classes, batch).astype(np.int64)
    targets = rng.dirichlet(np.ones(classes), batch)
    return values, dims, x, labels, np.ascontiguousarray(targets)


def _time_call(fn, *args, repeats: int) -> float:
    fn(*args)  # warm-up / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1e6


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    backends = {}
    for name in ("numpy", "numba"):
        try:
            backends[name] = get_backend(name)
        except ImportError:
            print(f"backend {name} unavailable, skipping")
    print(f"{'shape':<28} {'kernel':<18} " + " ".join(f"{n + ' us':>12}" for n in backends) + f" {'speedup':>9}")
    for label, batch, dim, hidden, classes in SHAPES:
        values, dims, x, labels, targets = _make_workload(batch, dim, hidden, classes, seed=0)
        for kernel, call_args in (
            ("forward_probs", (values, dims, x)),
            ("grad_cross_entropy", (values, dims, x, labels)),
            ("grad_consistency", (values, dims, x, targets)),
        ):
            times = {
                name: _time_call(getattr(mod, kernel), *call_args, repeats=args.repeats)
                for name, mod in backends.items()
            }
            speedup = (
                f"{times['numpy'] / times['numba']:>8.1f}x"
                if {"numpy", "numba"} <= times.keys()
                else "        -"
            )
            print(
                f"{label:<28} {kernel:<18} "
                + " ".join(f"{times[n]:>12.2f}" for n in backends)
                + f" {speedup}"
            )


if __name__ == "__main__":
    main()
