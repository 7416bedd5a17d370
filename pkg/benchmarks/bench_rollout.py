"""Benchmark the compiled rollout kernel against the pure-numpy fallback.

Usage: python benchmarks/bench_rollout.py [n_sample] [ell]

Simulates identical batches through both kernels on the lossy diffusion
network, reports wall times and speedup, and checks numerical agreement.
"""

import sys
import time

import numpy as np

from mnlqr import _rollout_np
from mnlqr.problem import make_diffusion_network

try:
    from mnlqr import _rollout_cy
except ImportError:
    _rollout_cy = None


def make_batch(problem, n_sample, ell, seed=0):
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n_sample, problem.n))
    gains = 0.004 * rng.standard_normal((n_sample, problem.m, problem.n))
    delta = 0.1 * rng.standard_normal((n_sample, ell, problem.p))
    gamma = 0.1 * rng.standard_normal((n_sample, ell, problem.q))
    return tuple(np.ascontiguousarray(a) for a in
                 (x0, gains, delta, gamma, problem.A, problem.B,
                  problem.Astack, problem.Bstack, problem.Q, problem.R))


def bench(kernel, args, ell, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        costs, diverged = kernel.rollout_costs(*args, ell)
        best = min(best, time.perf_counter() - t0)
    return best, costs


def main():
    n_sample = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
    ell = int(sys.argv[2]) if len(sys.argv) > 2 else 20
    problem = make_diffusion_network()
    args = make_batch(problem, n_sample, ell)
    print(f"batch: {n_sample} rollouts x {ell} steps on the "
          f"{problem.n}-state diffusion network")

    t_np, c_np = bench(_rollout_np, args, ell)
    rate_np = n_sample * ell / t_np
    print(f"numpy  kernel: {t_np * 1e3:9.2f} ms  ({rate_np / 1e6:6.1f} M steps/s)")

    if _rollout_cy is None:
        print("cython kernel: unavailable (extension not built)")
        return
    t_cy, c_cy = bench(_rollout_cy, args, ell)
    rate_cy = n_sample * ell / t_cy
    print(f"cython kernel: {t_cy * 1e3:9.2f} ms  ({rate_cy / 1e6:6.1f} M steps/s)")
    print(f"speedup: {t_np / t_cy:.2f}x")

    rel = np.max(np.abs(c_np - c_cy) / (1.0 + np.abs(c_np)))
    print(f"max relative cost disagreement: {rel:.3e}")
    if rel > 1e-10:
        raise SystemExit("backends disagree beyond tolerance")


if __name__ == "__main__":
    main()
