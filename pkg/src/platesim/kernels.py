"""Backend selection for the time-stepping kernel.

The compiled extension ``platesim._kernels`` is used when it imports;
otherwise the numpy implementation in ``platesim._fallback`` takes over.
``PLATESIM_BACKEND=numpy`` forces the fallback.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from platesim import _fallback

try:
    from platesim import _kernels as _ext
except ImportError:  # extension not built
    _ext = None

BACKENDS = {"numpy": _fallback.run_steps}
if _ext is not None:
    BACKENDS["cython"] = _ext.run_steps


def default_backend() -> str:
    forced = os.environ.get("PLATESIM_BACKEND")
    if forced:
        if forced not in BACKENDS:
            raise RuntimeError(f"PLATESIM_BACKEND={forced!r} unavailable; have {sorted(BACKENDS)}")
        return forced
    return "cython" if "cython" in BACKENDS else "numpy"


BACKEND = default_backend()


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PLATESIM_THREADS", "1")))
    except ValueError:
        return 1


def run_steps(U: np.ndarray, V: np.ndarray, t0: float, dt: float, nsteps: int, plan: dict,
              *, backend: str | None = None, threads: int | None = None) -> int:
    """Advance the rows of U, V in place; returns the steps completed.

    With several threads the rows are split into contiguous chunks cut on
    multiples of the fallback block size, so neither backend's result
    depends on the split.
    """
    fn = BACKENDS[backend or BACKEND]
    threads = threads or default_threads()
    args = (
        plan["prop"], plan["synth"], plan["anal"], plan["damp_amp"], plan["damp_omega"],
        plan["damp_phase"], plan["damp_space"], plan["space_const"], plan["f_kind"],
        plan["f_coef"], plan["wu"], plan["wv"], plan["blowup"], plan["order"],
    )
    B = U.shape[0]
    if threads <= 1 or B <= _fallback.BLOCK:
        return int(fn(U, V, float(t0), float(dt), int(nsteps), *args))

    # cut on the fallback's block boundaries so each row keeps its block
    nblk = -(-B // _fallback.BLOCK)
    bounds = np.minimum(np.linspace(0, nblk, threads + 1).astype(int) * _fallback.BLOCK, B)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(threads) if bounds[i + 1] > bounds[i]]
    # slices of C-contiguous rows stay contiguous, so views are updated in place
    with ThreadPoolExecutor(len(chunks)) as pool:
        done = list(pool.map(
            lambda c: int(fn(U[c[0]:c[1]], V[c[0]:c[1]], float(t0), float(dt), int(nsteps), *args)),
            chunks,
        ))
    return min(done)
