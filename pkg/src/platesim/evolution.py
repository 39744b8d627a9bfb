"""Time integration of the plate system in first-order form.

Per sine mode k the constant part of the generator is the 2x2 block

    d/dt [u_k, v_k] = [[0, 1], [-(mu_k^2 + lam), -mu_k]] [u_k, v_k],

which is propagated exactly.  The bounded remainder ``v' = -a(t, x) v + f(u)``
is handled by explicit midpoint on the collocation grid inside a Strang
splitting.  ``evolve`` realises the semilinear process S(t, tau) and
``evolve_homogeneous`` the linear process L(t, tau) (f = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from platesim import kernels
from platesim.coefficients import DampingSpec, NonlinearitySpec, Profile, _space_factor, nemitskii
from platesim.errors import AliasingError, BlowupError, InvalidArgumentError
from platesim.spectral import (
    CollocationGrid,
    ModalField,
    PhaseState,
    gram_factor,
    mode_eigenvalues,
    norm_X0,
)

ZERO_F = NonlinearitySpec("zero")


def expm_2x2(a, b, c, d, t):
    """exp(t [[a, b], [c, d]]) in closed form, broadcasting over arrays.

    Splits ``A = s I + B`` with ``s = tr(A)/2``; then ``B^2 = disc I`` and the
    exponential is ``e^{st} (C(t) I + S(t) B)`` with trigonometric,
    hyperbolic or linear ``C, S`` according to the sign of ``disc``.
    """
    a, b, c, d, t = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c, d, t)))
    s = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    r = np.sqrt(np.abs(disc))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # complex pair
        ec_osc = np.exp(s * t) * np.cos(r * t)
        es_osc = np.exp(s * t) * np.where(r > 0, np.sin(r * t) / np.where(r > 0, r, 1.0), t)
        # real distinct; written with e^{(s +- r) t} to avoid cosh overflow
        ep, em = np.exp((s + r) * t), np.exp((s - r) * t)
        ec_hyp = 0.5 * (ep + em)
        es_hyp = np.where(r > 0, 0.5 * (ep - em) / np.where(r > 0, r, 1.0), t)
    EC = np.where(disc < 0, ec_osc, np.where(disc > 0, ec_hyp, np.exp(s * t)))
    ES = np.where(disc < 0, es_osc, np.where(disc > 0, es_hyp, np.exp(s * t) * t))
    return (EC + ES * (a - s), ES * b, ES * c, EC + ES * (d - s))


def mode_propagator(k, lam: float, dt: float, dim: int = 1) -> np.ndarray:
    """Exact 2x2 propagator of mode ``k`` over a step ``dt >= 0``."""
    if dt < 0:
        raise InvalidArgumentError("dt must be >= 0")
    mu = float(k) ** 2 if dim == 1 else float(sum(int(ki) ** 2 for ki in k))
    e = expm_2x2(0.0, 1.0, -(mu**2 + lam), -mu, dt)
    return np.array([[float(e[0]), float(e[1])], [float(e[2]), float(e[3])]])


@dataclass(frozen=True)
class ProcessConfig:
    """Everything that defines one evolution process S_eps(t, tau).

    ``damping=None`` drops the a(t, x) term altogether; that lies outside the
    standing hypotheses and only serves degenerate checks of the splitting.
    """

    damping: DampingSpec | None
    nonlinearity: NonlinearitySpec = field(default_factory=lambda: ZERO_F)
    lam: float = 1.0
    N: int = 16
    M: int | None = None
    dim: int = 1
    dt: float = 1e-2
    order: int = 2
    blowup: float = 1e8

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam}")
        if self.N < 1:
            raise InvalidArgumentError("N must be >= 1")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if self.order not in (1, 2):
            raise InvalidArgumentError("integrator order must be 1 or 2")
        need = max(self.N, self.nonlinearity.dealias_factor() * self.N)
        if self.M is None:
            object.__setattr__(self, "M", need)
        elif self.M < need:
            raise AliasingError(f"M={self.M} below the dealiasing requirement M >= {need}")

    def with_epsilon(self, epsilon: float) -> "ProcessConfig":
        return replace(self, damping=self.damping.with_epsilon(epsilon))

    def homogeneous(self) -> "ProcessConfig":
        return replace(self, nonlinearity=ZERO_F)

    @property
    def nm(self) -> int:
        return self.N**self.dim

    @cached_property
    def grid(self) -> CollocationGrid:
        return CollocationGrid(self.M, self.dim)

    @cached_property
    def mu(self) -> np.ndarray:
        return mode_eigenvalues(self.N, self.dim).ravel()

    @cached_property
    def weights_u(self) -> np.ndarray:
        """Flat weights with ||u||_{1/2}^2 = sum(w * u_hat^2)."""
        return gram_factor(self.dim) * (self.mu**2 + self.lam)

    @cached_property
    def _static_plan(self) -> dict:
        if self.damping is None:
            amp, omega, phase, kinds = np.zeros(0), np.zeros(0), np.zeros(0), []
        else:
            amp, omega, phase, kinds = self.damping.kernel_terms()
        pts = self.grid.points
        space = np.array([_space_factor(k, pts) for k in kinds]).reshape(len(kinds), pts.shape[0])
        poly = self.nonlinearity.poly
        if self.nonlinearity.is_zero:
            f_kind, f_coef = 0, np.zeros(1)
        elif poly is not None:
            f_kind, f_coef = 1, poly.copy()
        else:
            f_kind, f_coef = 2, np.array([dict(self.nonlinearity.params)["amp"]])
        return {
            "synth": np.ascontiguousarray(self.grid.synthesis_matrix(self.N)),
            "anal": np.ascontiguousarray(self.grid.analysis_matrix(self.N)),
            "damp_amp": amp,
            "damp_omega": omega,
            "damp_phase": phase,
            "damp_space": np.ascontiguousarray(space),
            "space_const": self.damping is None or self.damping.space_constant,
            "f_kind": f_kind,
            "f_coef": np.ascontiguousarray(f_coef, dtype=float),
            "wu": np.ascontiguousarray(self.weights_u),
            "wv": gram_factor(self.dim),
            "blowup": float(self.blowup),
            "order": self.order,
        }

    def plan(self, dt: float | None = None) -> dict:
        """Kernel inputs for steps of size ``dt`` (default: the config step)."""
        dt = self.dt if dt is None else dt
        h = 0.5 * dt if self.order == 2 else dt
        e = expm_2x2(0.0, 1.0, -(self.mu**2 + self.lam), -self.mu, h)
        return {**self._static_plan, "prop": np.ascontiguousarray(np.array(e))}

    @cached_property
    def main_plan(self) -> dict:
        return self.plan()


@dataclass(frozen=True)
class Trajectory:
    """Samples of one solution; rows of U, V are flat sine coefficients."""

    times: np.ndarray
    U: np.ndarray
    V: np.ndarray
    N: int
    dim: int
    lam: float

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> PhaseState:
        return PhaseState.from_flat(self.U[i], self.V[i], self.N, self.lam, self.dim)

    @property
    def states(self) -> list[PhaseState]:
        return [self.state(i) for i in range(len(self))]

    @property
    def initial(self) -> PhaseState:
        return self.state(0)

    @property
    def final(self) -> PhaseState:
        return self.state(-1)


@dataclass(frozen=True)
class BatchTrajectory:
    """Samples of many solutions on a shared time grid: U has shape (S, B, nm)."""

    times: np.ndarray
    U: np.ndarray
    V: np.ndarray
    N: int
    dim: int
    lam: float

    @property
    def size(self) -> int:
        return self.U.shape[1]

    def column(self, j: int) -> Trajectory:
        return Trajectory(self.times, self.U[:, j], self.V[:, j], self.N, self.dim, self.lam)


def step_schedule(tau: float, t: float, dt: float) -> tuple[int, float]:
    """Number of full steps and the length of the shortened last step (0 if none)."""
    total = t - tau
    n = round(total / dt)
    if abs(total - n * dt) <= 1e-9 * dt:
        return int(n), 0.0
    n = math.floor(total / dt)
    return int(n), total - n * dt


def evolve_batch(U0, V0, tau: float, t: float, cfg: ProcessConfig, *, record_every: int | None = 1,
                 backend: str | None = None, threads: int | None = None) -> BatchTrajectory:
    """Evolve all rows of (U0, V0) from ``tau`` to exactly ``t``.

    ``record_every=None`` keeps only the initial and final states.
    """
    if t < tau:
        raise InvalidArgumentError(f"need t >= tau, got t={t}, tau={tau}")
    U = np.array(U0, dtype=float, order="C", ndmin=2, copy=True)
    V = np.array(V0, dtype=float, order="C", ndmin=2, copy=True)
    if U.shape != V.shape or U.shape[1] != cfg.nm:
        raise InvalidArgumentError(f"state batch shape {U.shape}/{V.shape} does not match nm={cfg.nm}")

    times, Us, Vs = [tau], [U.copy()], [V.copy()]
    n_full, rem = step_schedule(tau, t, cfg.dt)
    chunk = n_full if not record_every else int(record_every)
    plan = cfg.main_plan

    done_steps = 0
    while done_steps < n_full:
        n = min(chunk, n_full - done_steps) if chunk else n_full
        t_start = tau + done_steps * cfg.dt
        ok = kernels.run_steps(U, V, t_start, cfg.dt, n, plan, backend=backend, threads=threads)
        if ok < n:
            raise BlowupError("state left the admissible range", time=t_start + (ok + 1) * cfg.dt)
        done_steps += n
        if record_every or (done_steps == n_full and rem == 0.0):
            times.append(t if (done_steps == n_full and rem == 0.0) else tau + done_steps * cfg.dt)
            Us.append(U.copy())
            Vs.append(V.copy())
    if rem > 0.0:
        t_start = tau + n_full * cfg.dt
        ok = kernels.run_steps(U, V, t_start, rem, 1, cfg.plan(rem), backend=backend, threads=threads)
        if ok < 1:
            raise BlowupError("state left the admissible range", time=t)
        times.append(t)
        Us.append(U.copy())
        Vs.append(V.copy())
    return BatchTrajectory(np.array(times), np.stack(Us), np.stack(Vs), cfg.N, cfg.dim, cfg.lam)


def strang_step(x: PhaseState, t: float, dt: float, cfg: ProcessConfig, *,
                backend: str | None = None) -> PhaseState:
    """One splitting step of length ``dt`` starting at time ``t``.

    Uses the integrator order of ``cfg``; ``cfg.dt`` is ignored.
    """
    _check_state(x, cfg)
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    U = np.array(x.u.flat(), dtype=float, ndmin=2)
    V = np.array(x.v.flat(), dtype=float, ndmin=2)
    if kernels.run_steps(U, V, t, dt, 1, cfg.plan(dt), backend=backend) < 1:
        raise BlowupError("state left the admissible range", time=t + dt)
    return PhaseState.from_flat(U[0], V[0], cfg.N, cfg.lam, cfg.dim)


def _check_state(x0: PhaseState, cfg: ProcessConfig) -> None:
    if x0.N != cfg.N or x0.dim != cfg.dim:
        raise InvalidArgumentError(f"state has N={x0.N}, dim={x0.dim}; config has N={cfg.N}, dim={cfg.dim}")
    if x0.lam != cfg.lam:
        raise InvalidArgumentError(f"state lambda {x0.lam} differs from config lambda {cfg.lam}")


def evolve(x0: PhaseState, tau: float, t: float, cfg: ProcessConfig, *, record_every: int | None = 1,
           backend: str | None = None) -> Trajectory:
    """Sampled solution of the semilinear problem: realises S(t, tau) x0."""
    _check_state(x0, cfg)
    bt = evolve_batch(x0.u.flat()[None], x0.v.flat()[None], tau, t, cfg,
                      record_every=record_every, backend=backend)
    return bt.column(0)


def evolve_homogeneous(x0: PhaseState, tau: float, t: float, cfg: ProcessConfig, *,
                       record_every: int | None = 1, backend: str | None = None) -> Trajectory:
    """Same as :func:`evolve` with f = 0: realises L(t, tau) x0."""
    return evolve(x0, tau, t, cfg.homogeneous(), record_every=record_every, backend=backend)


@dataclass(frozen=True)
class VariationOfConstantsResult:
    residual: float
    nodes: int
    h: float
    norm_S: float


def verify_variation_of_constants(x0: PhaseState, tau: float, t: float, cfg: ProcessConfig,
                                  h: float) -> VariationOfConstantsResult:
    """Residual of S x0 = L x0 + int L(t, s) F(S(s) x0) ds with trapezoid quadrature.

    ``h`` must be a multiple of the step and divide ``t - tau``.
    """
    _check_state(x0, cfg)
    if t == tau:
        return VariationOfConstantsResult(0.0, 1, h, norm_X0(x0))
    per_node = round(h / cfg.dt)
    n_nodes = round((t - tau) / h)
    if per_node < 1 or abs(per_node * cfg.dt - h) > 1e-9 * cfg.dt:
        raise InvalidArgumentError(f"quadrature step {h} is not a multiple of dt={cfg.dt}")
    if abs(n_nodes * h - (t - tau)) > 1e-9 * h:
        raise InvalidArgumentError(f"quadrature step {h} does not divide t - tau = {t - tau}")

    traj = evolve(x0, tau, t, cfg, record_every=per_node)
    S_final = traj.final
    L_x0 = evolve_homogeneous(x0, tau, t, cfg, record_every=None).final

    zero = ModalField.from_flat(np.zeros(cfg.nm), cfg.N, cfg.dim)
    Q = np.zeros(2 * cfg.nm)
    for j, s in enumerate(traj.times):
        w = 0.5 if j in (0, len(traj.times) - 1) else 1.0
        fu = nemitskii(cfg.nonlinearity, traj.state(j).u, cfg.grid)
        y = PhaseState(zero, fu, cfg.lam)
        z = evolve_homogeneous(y, float(s), t, cfg, record_every=None).final
        Q += w * h * np.concatenate([z.u.flat(), z.v.flat()])

    r = np.concatenate([S_final.u.flat(), S_final.v.flat()]) - np.concatenate([L_x0.u.flat(), L_x0.v.flat()]) - Q
    res = PhaseState.from_flat(r[: cfg.nm], r[cfg.nm:], cfg.N, cfg.lam, cfg.dim)
    return VariationOfConstantsResult(norm_X0(res), n_nodes + 1, h, norm_X0(S_final))


def constant_damping(a: float = 1.0) -> DampingSpec:
    """Convenience: a(t, x) = a with tight declared bounds."""
    return DampingSpec(Profile.make("constant", c0=a), alpha0=a, alpha1=a, holder_C=0.0)
