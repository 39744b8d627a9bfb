"""Pure-numpy Strang-splitting stepper, used when the extension is absent.

``run_steps`` advances every row of ``U``/``V`` (flat sine coefficients) by
``nsteps`` steps of size ``dt`` starting at ``t0``, in place, and returns the
number of steps completed before the blowup guard tripped (``nsteps`` when
nothing went wrong).

One step (``order=2``):
  1. exact stiff block ``prop`` (half step) on every mode;
  2. explicit midpoint for ``v' = P[-a(t, x) v + f(u)]`` with ``u`` frozen;
  3. the stiff half step again.
``order=1`` applies a full-step ``prop`` followed by an explicit Euler step.

Rows are advanced in fixed blocks of ``BLOCK`` rows.  The matrix products
go through BLAS, whose rounding may depend on the operand shape, so a row's
result is reproducible given the block it sits in; callers that split a
batch (threads) cut it on block boundaries.
"""

from __future__ import annotations

import numpy as np


def _f(kind, coef, s):
    if kind == 1:
        acc = np.zeros_like(s)
        for c in coef[::-1]:
            acc = acc * s + c
        return acc
    if kind == 2:
        return coef[0] * np.sin(s)
    return np.zeros_like(s)


BLOCK = 64


def run_steps(U, V, t0, dt, nsteps, prop, synth, anal, damp_amp, damp_omega, damp_phase,
              damp_space, space_const, f_kind, f_coef, wu, wv, blowup, order):
    done = nsteps
    for b0 in range(0, U.shape[0], BLOCK):
        n = _run_block(U[b0:b0 + BLOCK], V[b0:b0 + BLOCK], t0, dt, nsteps, prop, synth, anal,
                       damp_amp, damp_omega, damp_phase, damp_space, space_const, f_kind, f_coef,
                       wu, wv, blowup, order)
        if n < done:
            return n
    return done


def _run_block(U, V, t0, dt, nsteps, prop, synth, anal, damp_amp, damp_omega, damp_phase,
               damp_space, space_const, f_kind, f_coef, wu, wv, blowup, order):
    has_damp = damp_amp.size > 0
    has_f = f_kind != 0
    half = 0.5 * dt
    p11, p12, p21, p22 = prop
    synth_T = synth.T
    anal_T = anal.T
    lim2 = blowup * blowup

    def stiff():
        u = U.copy()
        U[:] = p11 * u + p12 * V
        V[:] = p21 * u + p22 * V

    for step in range(nsteps):
        t = t0 + step * dt
        if has_damp:
            tf0 = damp_amp * np.sin(damp_omega * t + damp_phase)
            tf1 = damp_amp * np.sin(damp_omega * (t + half) + damp_phase)
            if space_const:
                a0, a1 = tf0.sum(), tf1.sum()
            else:
                a0, a1 = tf0 @ damp_space, tf1 @ damp_space
        else:
            a0 = a1 = 0.0

        stiff()
        if has_damp or has_f:
            g = _f(f_kind, f_coef, U @ synth_T) if has_f else 0.0
            if space_const:
                gc = g @ anal_T if has_f else 0.0
                if order == 2:
                    v1 = V + half * (-a0 * V + gc)
                    V += dt * (-a1 * v1 + gc)
                else:
                    V += dt * (-a0 * V + gc)
            else:
                k = (-a0 * (V @ synth_T) + g) @ anal_T
                if order == 2:
                    v1 = V + half * k
                    k = (-a1 * (v1 @ synth_T) + g) @ anal_T
                V += dt * k
        if order == 2:
            stiff()

        nrm = (U * U) @ wu + wv * np.einsum("ij,ij->i", V, V)
        if not np.all(np.isfinite(nrm)) or np.any(nrm > lim2):
            return step
    return nsteps
