"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from artifact import kernels
from artifact.jsq_engine import coupling_dominance, simulate_stationary
from artifact.model_core import QueueParams

CASES = {
    "simulate n=2 horizon=2e3": lambda be: simulate_stationary(
        QueueParams(2.0, (0.5, 0.5), 0.2), 2e3, 20, 1, ["p_empty", "perp:2"], backend=be),
    "coupling n=3 epochs=2e4": lambda be: coupling_dominance(
        QueueParams(2.0, (0.4, 0.3, 0.3), 0.2), 20_000, 1, backend=be),
    "gauss-seidel 200 sweeps": None,
}


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _gs_setup():
    from artifact.jsq_engine import _transitions
    src, dst, rate, _, shape = _transitions(QueueParams(2.0, (0.5, 0.5), 0.5), 40)
    N = int(np.prod(shape))
    order = np.argsort(dst, kind="stable")
    indptr = np.concatenate(([0], np.cumsum(np.bincount(dst, minlength=N)))).astype(np.int64)
    out = np.bincount(src, weights=rate, minlength=N)
    return (indptr, np.ascontiguousarray(src[order], dtype=np.int64),
            np.ascontiguousarray(rate[order], dtype=float), out, N)


def _gs(backend: str, setup):
    indptr, src, rate, out, N = setup
    pi = np.full(N, 1.0 / N)  # uniform start, so the sweeps do all the work
    kernels.get(backend).gauss_seidel(indptr, src, rate, out, pi, 200, 0.0, 50)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        kernels.get("cython")
    except ImportError:
        print("compiled extension not available; build with pip install -e .")
        return
    print(f"{'case':30s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    setup = _gs_setup()
    for name, fn in CASES.items():
        run = (lambda be: _gs(be, setup)) if fn is None else fn
        py = _best(lambda: run("python"), args.repeat)
        cy = _best(lambda: run("cython"), args.repeat)
        print(f"{name:30s} {py:10.4f} {cy:10.4f} {py / cy:8.1f}x")


if __name__ == "__main__":
    main()
