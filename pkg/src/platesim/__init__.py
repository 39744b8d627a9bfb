"""Spectral-Galerkin simulator and diagnostics for a structurally damped plate.

The equation ``u_tt + a(t, x) u_t - Delta u_t + Delta^2 u + lam u = f(u)`` is
posed on ``(0, pi)^n`` (``n = 1, 2``) with hinged (Navier) boundary
conditions and discretised in the sine basis.

Modules
-------
spectral
    Sine basis, collocation grids, transforms and norms.
coefficients
    Damping and nonlinearity catalogs plus hypothesis validators.
evolution
    Strang-splitting time integration of the evolution process.
energy
    Energy functionals, constant selection and decay certificates.
pullback
    Point-cloud pullback attractor sections and the damping perturbation study.
cli_io
    Configuration, orchestration and serialized outputs.
"""

__version__ = "0.1.0"

from platesim.kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND"]
