"""Damping profiles a_eps(t, x), nonlinearities f(s), and their validators.

Both families come from small closed-form catalogs addressed by string key.
Damping profiles are sums of separable terms ``amp * T(t) * X(x)`` with
``T`` either 1 or ``sin(omega t)`` and ``X`` either 1 or ``prod_i sin(x_i)``;
the compiled kernels consume that term list directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar

from platesim.errors import (
    AliasingError,
    DissipativityViolation,
    HypothesisViolation,
    InvalidArgumentError,
    NumericOverflowError,
    UnknownCatalogEntry,
)
from platesim.spectral import CollocationGrid, ModalField, dst_forward, dst_inverse

# ---------------------------------------------------------------------------
# damping catalog
# ---------------------------------------------------------------------------

# key -> (defaults, term builder).  A term is (amp, omega, time_kind, space_kind).
_PROFILE_CATALOG: dict[str, tuple[dict, Callable]] = {
    "zero": ({}, lambda p: []),
    "constant": ({"c0": 1.0}, lambda p: [(p["c0"], 0.0, "const", "one")]),
    "sin_t": (
        {"c0": 1.0, "c1": 0.5, "omega": 1.0},
        lambda p: [(p["c0"], 0.0, "const", "one"), (p["c1"], p["omega"], "sin", "one")],
    ),
    "sin_t_sin_x": (
        {"c0": 1.0, "c1": 0.5, "c2": 0.5, "omega": 1.0},
        lambda p: [
            (p["c0"], 0.0, "const", "one"),
            (p["c1"], p["omega"], "sin", "one"),
            (p["c1"] * p["c2"], p["omega"], "sin", "sin"),
        ],
    ),
    "sin_x": ({"c": 1.0}, lambda p: [(p["c"], 0.0, "const", "sin")]),
}

PROFILE_KEYS = tuple(_PROFILE_CATALOG)


@dataclass(frozen=True)
class Profile:
    """A catalog damping profile: key plus sorted numeric parameters."""

    key: str
    params: tuple = ()

    def __post_init__(self):
        if self.key not in _PROFILE_CATALOG:
            raise UnknownCatalogEntry(f"unknown damping profile {self.key!r}")
        defaults, _ = _PROFILE_CATALOG[self.key]
        given = dict(self.params)
        unknown = set(given) - set(defaults)
        if unknown:
            raise InvalidArgumentError(
                f"profile {self.key!r} does not take parameter(s) {sorted(unknown)}"
            )
        merged = {**defaults, **{k: float(v) for k, v in given.items()}}
        object.__setattr__(self, "params", tuple(sorted(merged.items())))

    @classmethod
    def make(cls, key: str, **params) -> "Profile":
        return cls(key, tuple(params.items()))

    def terms(self) -> list[tuple[float, float, str, str]]:
        return _PROFILE_CATALOG[self.key][1](dict(self.params))

    def __call__(self, t, points) -> np.ndarray:
        return _eval_terms(self.terms(), t, points)


def _time_factor(omega, kind, t):
    return np.sin(omega * np.asarray(t, dtype=float)) if kind == "sin" else np.ones_like(t, dtype=float)


def _space_factor(kind, points):
    points = np.atleast_2d(points)
    if kind == "sin":
        return np.prod(np.sin(points), axis=1)
    return np.ones(points.shape[0])


def _eval_terms(terms, t, points):
    """Values with shape ``t.shape + (npts,)``."""
    points = np.atleast_2d(points)
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (points.shape[0],))
    for amp, omega, tk, sk in terms:
        out = out + amp * np.multiply.outer(_time_factor(omega, tk, t), _space_factor(sk, points))
    return out


@dataclass(frozen=True)
class DampingSpec:
    """The family ``a_eps = base + eps * perturbation`` with declared bounds.

    ``alpha0 <= a_eps <= alpha1`` and the Hoelder modulus ``(beta, holder_C)``
    are declarations; :func:`validate_damping` measures them on a lattice.
    """

    base: Profile
    perturbation: Profile = field(default_factory=lambda: Profile("zero"))
    epsilon: float = 0.0
    alpha0: float = 1.0
    alpha1: float = 1.0
    beta: float = 1.0
    holder_C: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidArgumentError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not self.alpha0 > 0:
            raise InvalidArgumentError(f"alpha0 must be positive, got {self.alpha0}")
        if self.alpha1 < self.alpha0:
            raise InvalidArgumentError("alpha1 must be >= alpha0")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidArgumentError(f"Hoelder exponent must lie in (0, 1], got {self.beta}")

    def with_epsilon(self, epsilon: float) -> "DampingSpec":
        return replace(self, epsilon=float(epsilon))

    def terms(self) -> list[tuple[float, float, str, str]]:
        out = list(self.base.terms())
        # eps = 0 drops the perturbation so a_0 is reproduced bit for bit
        if self.epsilon != 0.0:
            out += [(self.epsilon * a, w, tk, sk) for a, w, tk, sk in self.perturbation.terms()]
        return out

    @property
    def space_constant(self) -> bool:
        return all(sk == "one" for *_, sk in self.terms())

    def __call__(self, t, points) -> np.ndarray:
        return _eval_terms(self.terms(), t, points)

    def kernel_terms(self):
        """Arrays (amp, omega, phase, space_kind) for the compiled kernels."""
        terms = self.terms()
        amp = np.array([a for a, *_ in terms], dtype=float)
        omega = np.array([w if tk == "sin" else 0.0 for _, w, tk, _ in terms], dtype=float)
        phase = np.array([0.0 if tk == "sin" else np.pi / 2 for _, _, tk, _ in terms], dtype=float)
        kinds = [sk for *_, sk in terms]
        return amp, omega, phase, kinds


def eval_damping(spec: DampingSpec, t: float, grid: CollocationGrid) -> np.ndarray:
    """a_eps(t, .) on the grid, checked against the declared bounds."""
    vals = spec(t, grid.points)
    bad = np.flatnonzero((vals < spec.alpha0) | (vals > spec.alpha1))
    if bad.size:
        j = bad[0]
        raise HypothesisViolation(
            f"a(t={t}, x={grid.points[j]}) = {vals[j]} outside [{spec.alpha0}, {spec.alpha1}]",
            where=(t, tuple(grid.points[j])),
            value=float(vals[j]),
        )
    return vals.reshape(grid.shape)


@dataclass(frozen=True)
class DampingReport:
    measured_min: float
    measured_max: float
    min_witness: tuple
    max_witness: tuple
    holder_quotient: float
    holder_witness: tuple
    bounds_ok: bool
    holder_ok: bool | None

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.holder_ok is not False


def lattice_times(t_span=(-10.0, 10.0), n_t: int = 201) -> np.ndarray:
    return np.linspace(t_span[0], t_span[1], n_t)


def validate_damping(
    spec: DampingSpec,
    n_t: int = 201,
    M: int = 32,
    t_span=(-10.0, 10.0),
    dim: int = 1,
) -> DampingReport:
    """Measure bounds and the Hoelder quotient on a (t, x) lattice."""
    grid = CollocationGrid(M, dim)
    ts = lattice_times(t_span, n_t)
    A = spec(ts, grid.points)  # (n_t, npts)
    imin = np.unravel_index(np.argmin(A), A.shape)
    imax = np.unravel_index(np.argmax(A), A.shape)
    lo, hi = float(A[imin]), float(A[imax])

    quot, wit = 0.0, (float(ts[0]), float(ts[0]))
    for lag in range(1, n_t):
        d = np.max(np.abs(A[lag:] - A[:-lag]), axis=1)
        q = d / np.abs(ts[lag:] - ts[:-lag]) ** spec.beta
        i = int(np.argmax(q))
        if q[i] > quot:
            quot, wit = float(q[i]), (float(ts[i]), float(ts[i + lag]))

    holder_ok = None if spec.holder_C is None else quot <= spec.holder_C * (1 + 1e-12)
    return DampingReport(
        measured_min=lo,
        measured_max=hi,
        min_witness=(float(ts[imin[0]]), tuple(grid.points[imin[1]].tolist())),
        max_witness=(float(ts[imax[0]]), tuple(grid.points[imax[1]].tolist())),
        holder_quotient=quot,
        holder_witness=wit,
        bounds_ok=spec.alpha0 <= lo and hi <= spec.alpha1,
        holder_ok=holder_ok,
    )


def damping_gap(spec: DampingSpec, grid: CollocationGrid, t_span=(-10.0, 10.0), n_t: int = 201) -> float:
    """Lattice sup of |a_eps - a_0|."""
    ts = lattice_times(t_span, n_t)
    a_eps = spec(ts, grid.points)
    a_0 = spec.with_epsilon(0.0)(ts, grid.points)
    return float(np.max(np.abs(a_eps - a_0))) if a_eps.size else 0.0


# ---------------------------------------------------------------------------
# nonlinearity catalog
# ---------------------------------------------------------------------------

# key -> (defaults, polynomial coefficients or None, default rho, default c)
_F_CATALOG: dict[str, tuple[dict, Callable | None, float, Callable]] = {
    "zero": ({}, lambda p: (0.0,), 2.0, lambda p: 1.0),
    "linear": ({"kappa": 1.0}, lambda p: (0.0, p["kappa"]), 2.0, lambda p: max(abs(p["kappa"]), 1e-12)),
    "cubic": (
        {"kappa": 1.0},
        lambda p: (0.0, p["kappa"], 0.0, -1.0),
        3.0,
        lambda p: max(abs(p["kappa"]), 3.0),
    ),
    "neg_cubic": ({}, lambda p: (0.0, 0.0, 0.0, -1.0), 3.0, lambda p: 3.0),
    "square": ({}, lambda p: (0.0, 0.0, 1.0), 2.0, lambda p: 2.0),
    "sine": ({"amp": 1.0}, None, 2.0, lambda p: max(abs(p["amp"]), 1e-12)),
}

NONLINEARITY_KEYS = tuple(_F_CATALOG)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Catalog nonlinearity with declared growth ``|f'(s)| <= c (1 + |s|^(rho-1))``."""

    key: str
    params: tuple = ()
    rho: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.key not in _F_CATALOG:
            raise UnknownCatalogEntry(f"unknown nonlinearity {self.key!r}")
        defaults, _, rho0, c0 = _F_CATALOG[self.key]
        given = dict(self.params)
        unknown = set(given) - set(defaults)
        if unknown:
            raise InvalidArgumentError(
                f"nonlinearity {self.key!r} does not take parameter(s) {sorted(unknown)}"
            )
        merged = {**defaults, **{k: float(v) for k, v in given.items()}}
        object.__setattr__(self, "params", tuple(sorted(merged.items())))
        if self.rho is None:
            object.__setattr__(self, "rho", rho0)
        if self.c is None:
            object.__setattr__(self, "c", c0(merged))
        if not self.rho > 1:
            raise InvalidArgumentError(f"growth exponent rho must exceed 1, got {self.rho}")
        if not self.c > 0:
            raise InvalidArgumentError(f"growth constant c must be positive, got {self.c}")

    @classmethod
    def make(cls, key: str, *, rho=None, c=None, **params) -> "NonlinearitySpec":
        return cls(key, tuple(params.items()), rho, c)

    @property
    def poly(self) -> np.ndarray | None:
        """Power-basis coefficients of f, or None for non-polynomial entries."""
        build = _F_CATALOG[self.key][1]
        return None if build is None else np.array(build(dict(self.params)), dtype=float)

    @property
    def is_zero(self) -> bool:
        p = self.poly
        return p is not None and not np.any(p)

    @property
    def degree(self) -> int | None:
        p = self.poly
        if p is None:
            return None
        nz = np.flatnonzero(p)
        return int(nz[-1]) if nz.size else 0

    def dealias_factor(self) -> int:
        """Grid-to-mode ratio that keeps collocation of f(u) exact."""
        d = self.degree
        if d is None:
            return 2
        if d <= 1:
            return 1
        return max(d, math.ceil(self.rho))

    def f(self, s):
        s = np.asarray(s, dtype=float)
        p = self.poly
        if p is not None:
            return P.polyval(s, p)
        return dict(self.params)["amp"] * np.sin(s)

    def fprime(self, s):
        s = np.asarray(s, dtype=float)
        p = self.poly
        if p is not None:
            return P.polyval(s, P.polyder(p)) if p.size > 1 else np.zeros_like(s)
        return dict(self.params)["amp"] * np.cos(s)

    def F(self, s):
        """Primitive vanishing at 0."""
        s = np.asarray(s, dtype=float)
        p = self.poly
        if p is not None:
            return P.polyval(s, P.polyint(p))
        return dict(self.params)["amp"] * (1.0 - np.cos(s))

    def check_primitive(self, S: float = 10.0, n: int = 2001, h: float = 1e-4) -> float:
        """Worst relative mismatch between the central difference of F and f."""
        s = np.linspace(-S, S, n)
        fd = (self.F(s + h) - self.F(s - h)) / (2 * h)
        return float(np.max(np.abs(fd - self.f(s)) / (1.0 + np.abs(self.f(s)))))


def _finite(vals, what):
    if not np.all(np.isfinite(vals)):
        raise NumericOverflowError(f"{what} produced non-finite values")
    return vals


def eval_f(spec: NonlinearitySpec, values) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return _finite(spec.f(values), f"f[{spec.key}]")


def eval_F(spec: NonlinearitySpec, values) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return _finite(spec.F(values), f"F[{spec.key}]")


def nemitskii(spec: NonlinearitySpec, u: ModalField, grid: CollocationGrid) -> ModalField:
    """Sine coefficients of the collocation projection of f(u)."""
    need = spec.dealias_factor() * u.N
    if grid.M < need:
        raise AliasingError(f"f[{spec.key}] on {u.N} modes needs M >= {need}, grid has M={grid.M}")
    return dst_forward(eval_f(spec, dst_inverse(u, grid)), u.N)


# ---------------------------------------------------------------------------
# hypothesis validators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DissipativityCertificate:
    """``f(s) s <= M_nu + nu s^2`` on [-S, S], and ``C_nu = M_nu |Omega|``."""

    nu: float
    M_nu: float
    C_nu: float
    probe_range: float
    argmax: float
    boundary_attained: bool


def _candidate_critical_points(spec, nu, S):
    p = spec.poly
    if p is None:
        return np.array([])
    # g(s) = f(s) s - nu s^2
    g = P.polysub(P.polymulx(p), [0.0, 0.0, nu])
    dg = P.polyder(g)
    if not np.any(dg):
        return np.array([])
    r = P.polyroots(dg)
    r = r.real[np.abs(r.imag) < 1e-12]
    return r[np.abs(r) <= S]


def fit_dissipativity(
    spec: NonlinearitySpec,
    nu: float,
    S: float = 10.0,
    omega_measure: float = math.pi,
    n: int = 20001,
    strict: bool = True,
) -> DissipativityCertificate:
    """Smallest ``M_nu >= 0`` with ``f(s)s - nu s^2 <= M_nu`` on the probe range."""
    if nu < 0:
        raise InvalidArgumentError(f"nu must be >= 0, got {nu}")
    g = lambda s: spec.f(s) * s - nu * np.asarray(s) ** 2  # noqa: E731
    s = np.linspace(-S, S, n)
    gs = g(s)
    i = int(np.argmax(gs))
    best_s, best = float(s[i]), float(gs[i])
    # refine interior lattice maxima, then try the closed-form critical points
    if 0 < i < n - 1:
        res = minimize_scalar(lambda x: -g(x), bounds=(s[i - 1], s[i + 1]), method="bounded",
                              options={"xatol": 1e-12})
        if -res.fun > best:
            best_s, best = float(res.x), float(-res.fun)
    for c in _candidate_critical_points(spec, nu, S):
        gc = float(g(c))
        if gc > best:
            best_s, best = float(c), gc

    step = s[1] - s[0]
    at_edge = abs(best_s) >= S - 0.5 * step
    rising = (g(S) - g(S - step) > 0) or (g(-S) - g(-S + step) > 0)
    boundary = bool(at_edge and rising)
    if boundary and strict:
        raise DissipativityViolation(
            f"f[{spec.key}](s) s - {nu} s^2 still increasing at |s| = {S}; "
            "the dissipativeness condition looks violated"
        )
    M_nu = max(best, 0.0)
    return DissipativityCertificate(
        nu=nu,
        M_nu=M_nu,
        C_nu=M_nu * omega_measure,
        probe_range=S,
        argmax=best_s,
        boundary_attained=boundary,
    )


@dataclass(frozen=True)
class GrowthReport:
    derivative_ratio: float
    derivative_witness: float
    pair_ratio: float
    pair_witness: tuple

    @property
    def passed(self) -> bool:
        return self.derivative_ratio <= 1 + 1e-12 and self.pair_ratio <= 1 + 1e-12


def verify_growth(spec: NonlinearitySpec, S: float = 10.0, samples: int = 20001, seed: int = 0) -> GrowthReport:
    """Check the derivative growth bound and its two-point consequence."""
    rho, c = spec.rho, spec.c
    s = np.linspace(-S, S, samples)
    r1 = np.abs(spec.fprime(s)) / (c * (1 + np.abs(s) ** (rho - 1)))
    i = int(np.argmax(r1))

    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-S, S, size=(2, samples))
    keep = a != b
    a, b = a[keep], b[keep]
    bound = 2 ** (rho - 1) * c * np.abs(a - b) * (1 + np.abs(a) ** (rho - 1) + np.abs(b) ** (rho - 1))
    r2 = np.abs(spec.f(a) - spec.f(b)) / bound
    j = int(np.argmax(r2))
    return GrowthReport(
        derivative_ratio=float(r1[i]),
        derivative_witness=float(s[i]),
        pair_ratio=float(r2[j]),
        pair_witness=(float(a[j]), float(b[j])),
    )
