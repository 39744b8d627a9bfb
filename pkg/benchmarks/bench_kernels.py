"""Wall-clock comparison of the compiled and numpy stepping kernels.

Usage::

    python benchmarks/bench_kernels.py [--steps 200] [--repeat 3]

Each case advances a batch of ``B`` states with ``N`` modes under
space-dependent damping and the cubic nonlinearity, which exercises every
stage of the kernel.  The two backends are also checked for agreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from platesim import kernels
from platesim.coefficients import DampingSpec, NonlinearitySpec, Profile
from platesim.evolution import ProcessConfig

CASES = [(1, 8), (1, 32), (64, 16), (200, 32), (2000, 16)]


def time_backend(backend, cfg, U0, V0, steps, repeat):
    best = float("inf")
    for _ in range(repeat):
        U, V = U0.copy(), V0.copy()
        t0 = time.perf_counter()
        kernels.run_steps(U, V, 0.0, cfg.dt, steps, cfg.main_plan, backend=backend, threads=1)
        best = min(best, time.perf_counter() - t0)
    return best, U


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    damping = DampingSpec(Profile.make("sin_t_sin_x"), alpha0=0.25, alpha1=2.0)
    f = NonlinearitySpec.make("cubic", kappa=1.0)
    backends = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND}); {args.steps} steps, best of {args.repeat}")
    print(f"{'B':>6} {'N':>4} " + " ".join(f"{b + ' [s]':>12}" for b in backends) + f" {'speedup':>8} {'max diff':>10}")
    for B, N in CASES:
        cfg = ProcessConfig(damping, f, N=N, dt=0.01)
        rng = np.random.default_rng(0)
        k = np.arange(1, N + 1)
        U0 = np.ascontiguousarray(rng.standard_normal((B, N)) / k**2)
        V0 = np.ascontiguousarray(rng.standard_normal((B, N)) / k**2)
        res = {b: time_backend(b, cfg, U0, V0, args.steps, args.repeat) for b in backends}
        times = " ".join(f"{res[b][0]:12.4f}" for b in backends)
        if len(backends) == 2:
            speed = res["numpy"][0] / res["cython"][0]
            diff = float(np.max(np.abs(res["numpy"][1] - res["cython"][1])))
            print(f"{B:6d} {N:4d} {times} {speed:8.2f} {diff:10.1e}")
        else:
            print(f"{B:6d} {N:4d} {times}")


if __name__ == "__main__":
    main()
