# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Strang-splitting stepper.

Same contract as :func:`platesim._fallback.run_steps`.  Rows are processed
in blocks of ``RB`` rows held in an interleaved buffer (``X[k * RB + r]``) for
the whole run; a short final block is zero padded.  Each row sees exactly the same sequence of floating point
operations whatever block it lands in, so results do not depend on the batch
size or on how the batch is split across threads.
"""

from libc.math cimport sin, isfinite
from libc.string cimport memset
import numpy as np

DEF RB = 8


cdef extern from *:
    """
    #define PLATESIM_RB 8
    /* Y[i, r] = sum_j A[i, j] X[j, r] for an interleaved block of
       PLATESIM_RB rows (X[j * RB + r]).  Every Y[i, r] is a single chain
       summed in increasing j, whatever the lane it occupies, so a row's
       result does not depend on its neighbours. */
    #if defined(__GNUC__) || defined(__clang__)
    typedef double platesim_v2 __attribute__((vector_size(16), aligned(8)));
    static void platesim_matvec(const double *A, const double *X, double *Y,
                                Py_ssize_t rows, Py_ssize_t cols)
    {
        Py_ssize_t i, j;
        int v;
        for (i = 0; i < rows; ++i) {
            platesim_v2 acc[PLATESIM_RB / 2];
            const double *Ai = A + i * cols;
            for (v = 0; v < PLATESIM_RB / 2; ++v) acc[v] = (platesim_v2){0.0, 0.0};
            for (j = 0; j < cols; ++j) {
                const platesim_v2 a = {Ai[j], Ai[j]};
                const platesim_v2 *x = (const platesim_v2 *)(X + j * PLATESIM_RB);
                for (v = 0; v < PLATESIM_RB / 2; ++v) acc[v] = acc[v] + a * x[v];
            }
            for (v = 0; v < PLATESIM_RB / 2; ++v)
                ((platesim_v2 *)(Y + i * PLATESIM_RB))[v] = acc[v];
        }
    }
    #else
    static void platesim_matvec(const double *A, const double *X, double *Y,
                                Py_ssize_t rows, Py_ssize_t cols)
    {
        Py_ssize_t i, j;
        int r;
        for (i = 0; i < rows; ++i) {
            double acc[PLATESIM_RB] = {0};
            const double *Ai = A + i * cols;
            for (j = 0; j < cols; ++j)
                for (r = 0; r < PLATESIM_RB; ++r) acc[r] = acc[r] + Ai[j] * X[j * PLATESIM_RB + r];
            for (r = 0; r < PLATESIM_RB; ++r) Y[i * PLATESIM_RB + r] = acc[r];
        }
    }
    #endif
    """
    void platesim_matvec(const double* A, const double* X, double* Y,
                         Py_ssize_t rows, Py_ssize_t cols) noexcept nogil


cdef inline double _f(int kind, const double[::1] coef, Py_ssize_t ncoef, double s) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc
    if kind == 1:
        # Horner
        acc = 0.0
        i = ncoef - 1
        while i >= 0:
            acc = acc * s + coef[i]
            i -= 1
        return acc
    elif kind == 2:
        return coef[0] * sin(s)
    return 0.0


cdef inline void _stiff(const double[:, ::1] prop, double* Ub, double* Vb, Py_ssize_t nm) noexcept nogil:
    cdef Py_ssize_t k, r, q
    cdef double uk, vk
    for k in range(nm):
        for r in range(RB):
            q = k * RB + r
            uk = Ub[q]
            vk = Vb[q]
            Ub[q] = prop[0, k] * uk + prop[1, k] * vk
            Vb[q] = prop[2, k] * uk + prop[3, k] * vk


def run_steps(double[:, ::1] U, double[:, ::1] V, double t0, double dt, long nsteps,
              double[:, ::1] prop, double[:, ::1] synth, double[:, ::1] anal,
              double[::1] damp_amp, double[::1] damp_omega, double[::1] damp_phase,
              double[:, ::1] damp_space, bint space_const,
              int f_kind, double[::1] f_coef,
              double[::1] wu, double wv, double blowup, int order):
    cdef Py_ssize_t B = U.shape[0]
    cdef Py_ssize_t nm = U.shape[1]
    cdef Py_ssize_t npts = synth.shape[0]
    cdef Py_ssize_t nt = damp_amp.shape[0]
    cdef Py_ssize_t ncoef = f_coef.shape[0]
    cdef bint has_damp = nt > 0
    cdef bint has_f = f_kind != 0
    cdef bint nonstiff = has_damp or has_f

    # interleaved block scratch
    cdef double[::1] Ub = np.zeros(nm * RB)
    cdef double[::1] Vb = np.zeros(nm * RB)
    cdef double[::1] v1 = np.zeros(nm * RB)
    cdef double[::1] gc = np.zeros(nm * RB)
    cdef double[::1] kc = np.zeros(nm * RB)
    cdef double[::1] ug = np.zeros(npts * RB)
    cdef double[::1] vg = np.zeros(npts * RB)
    cdef double[::1] g = np.zeros(npts * RB)
    cdef double[::1] wg = np.zeros(npts * RB)
    cdef double[::1] a0g = np.zeros(npts)
    cdef double[::1] a1g = np.zeros(npts)

    cdef long step, done = nsteps, block_done
    cdef Py_ssize_t b0, nb, r, k, j, m, q
    cdef double t, a0, a1, tf0, tf1, nrm, lim2 = blowup * blowup
    cdef double half = 0.5 * dt

    with nogil:
        b0 = 0
        while b0 < B:
            nb = B - b0
            if nb > RB:
                nb = RB
            memset(&Ub[0], 0, nm * RB * sizeof(double))
            memset(&Vb[0], 0, nm * RB * sizeof(double))
            for r in range(nb):
                for k in range(nm):
                    Ub[k * RB + r] = U[b0 + r, k]
                    Vb[k * RB + r] = V[b0 + r, k]

            block_done = nsteps
            for step in range(nsteps):
                t = t0 + step * dt
                # damping at the two stage times
                a0 = 0.0
                a1 = 0.0
                if has_damp:
                    if space_const:
                        for m in range(nt):
                            a0 = a0 + damp_amp[m] * sin(damp_omega[m] * t + damp_phase[m])
                            a1 = a1 + damp_amp[m] * sin(damp_omega[m] * (t + half) + damp_phase[m])
                    else:
                        for j in range(npts):
                            a0g[j] = 0.0
                            a1g[j] = 0.0
                        for m in range(nt):
                            tf0 = damp_amp[m] * sin(damp_omega[m] * t + damp_phase[m])
                            tf1 = damp_amp[m] * sin(damp_omega[m] * (t + half) + damp_phase[m])
                            for j in range(npts):
                                a0g[j] = a0g[j] + tf0 * damp_space[m, j]
                                a1g[j] = a1g[j] + tf1 * damp_space[m, j]

                # stiff block (half step for Strang, full step for Lie)
                _stiff(prop, &Ub[0], &Vb[0], nm)

                if nonstiff:
                    if has_f:
                        platesim_matvec(&synth[0, 0], &Ub[0], &ug[0], npts, nm)
                        for q in range(npts * RB):
                            g[q] = _f(f_kind, f_coef, ncoef, ug[q])
                    if space_const:
                        if has_f:
                            platesim_matvec(&anal[0, 0], &g[0], &gc[0], nm, npts)
                        else:
                            for q in range(nm * RB):
                                gc[q] = 0.0
                        if order == 2:
                            for q in range(nm * RB):
                                v1[q] = Vb[q] + half * (-a0 * Vb[q] + gc[q])
                            for q in range(nm * RB):
                                Vb[q] = Vb[q] + dt * (-a1 * v1[q] + gc[q])
                        else:
                            for q in range(nm * RB):
                                Vb[q] = Vb[q] + dt * (-a0 * Vb[q] + gc[q])
                    else:
                        platesim_matvec(&synth[0, 0], &Vb[0], &vg[0], npts, nm)
                        for j in range(npts):
                            for r in range(RB):
                                q = j * RB + r
                                wg[q] = -a0g[j] * vg[q]
                                if has_f:
                                    wg[q] = wg[q] + g[q]
                        platesim_matvec(&anal[0, 0], &wg[0], &kc[0], nm, npts)
                        if order == 2:
                            for q in range(nm * RB):
                                v1[q] = Vb[q] + half * kc[q]
                            platesim_matvec(&synth[0, 0], &v1[0], &vg[0], npts, nm)
                            for j in range(npts):
                                for r in range(RB):
                                    q = j * RB + r
                                    wg[q] = -a1g[j] * vg[q]
                                    if has_f:
                                        wg[q] = wg[q] + g[q]
                            platesim_matvec(&anal[0, 0], &wg[0], &kc[0], nm, npts)
                        for q in range(nm * RB):
                            Vb[q] = Vb[q] + dt * kc[q]

                if order == 2:
                    _stiff(prop, &Ub[0], &Vb[0], nm)

                # blowup guard on the live rows
                for r in range(nb):
                    nrm = 0.0
                    for k in range(nm):
                        q = k * RB + r
                        nrm = nrm + wu[k] * Ub[q] * Ub[q] + wv * Vb[q] * Vb[q]
                    if not isfinite(nrm) or nrm > lim2:
                        block_done = step
                        break
                if block_done != nsteps:
                    break

            for r in range(nb):
                for k in range(nm):
                    U[b0 + r, k] = Ub[k * RB + r]
                    V[b0 + r, k] = Vb[k * RB + r]
            if block_done < done:
                done = block_done
                break
            b0 = b0 + RB
    return done
