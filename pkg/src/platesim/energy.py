"""Energy functionals, constant selection and decay certificates.

Notation: ``x = (u, v)`` is a phase state, ``||x||`` its X0 norm with
``||u||_{1/2}^2 = ||Delta u||^2 + lam ||u||^2``.  The functionals are

    W(x)    = 1/2 ||x||^2 + 2 b lam^{1/2} <u, v>,
    calW(x) = W(x) - int F(u) dx,
    Z(x)    = 1/2 ||x||^2,

with ``F`` the primitive of the nonlinearity.  For ``0 < b <= 1/4`` the
coupling term is at most a quarter of ``||x||^2``, which gives the
sandwich ``1/4 ||x||^2 <= W <= 3/4 ||x||^2``.

Array helpers take flat coefficient rows (last axis = modes) so whole
trajectories are processed at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from platesim.coefficients import NonlinearitySpec, eval_F
from platesim.errors import DissipativityFailure, InfeasibleError, InvalidArgumentError
from platesim.evolution import BatchTrajectory, ProcessConfig, Trajectory
from platesim.spectral import (
    CollocationGrid,
    PhaseState,
    build_grid,
    dst_inverse,
    gram_factor,
    mode_eigenvalues,
)


def _check_b(b: float) -> None:
    if not 0 < b <= 0.25:
        raise InvalidArgumentError(f"coupling weight b must lie in (0, 1/4], got {b}")


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------


def mode_weights(N: int, lam: float, dim: int = 1) -> np.ndarray:
    """Flat weights ``w`` with ``||u||_{1/2}^2 = sum(w * u_hat^2)``."""
    mu = mode_eigenvalues(N, dim).ravel()
    return gram_factor(dim) * (mu**2 + lam)


def norms_squared(U, V, N: int, lam: float, dim: int = 1):
    """Return ``(||u||_{1/2}^2, ||v||^2, <u, v>)`` along the last axis."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    g = gram_factor(dim)
    nu2 = U**2 @ mode_weights(N, lam, dim)
    nv2 = g * np.einsum("...k,...k->...", V, V)
    uv = g * np.einsum("...k,...k->...", U, V)
    return nu2, nv2, uv


def W_values(U, V, b: float, N: int, lam: float, dim: int = 1) -> np.ndarray:
    _check_b(b)
    nu2, nv2, uv = norms_squared(U, V, N, lam, dim)
    return 0.5 * (nu2 + nv2) + 2.0 * b * math.sqrt(lam) * uv


def F_integrals(U, spec: NonlinearitySpec, N: int, grid: CollocationGrid) -> np.ndarray:
    """Composite-rule values of ``int F(u) dx`` for each row of ``U``."""
    U = np.asarray(U, dtype=float)
    if spec.is_zero:
        return np.zeros(U.shape[:-1])
    S = grid.synthesis_matrix(N)
    vals = eval_F(spec, U @ S.T)
    return vals.sum(axis=-1) * (np.pi / (grid.M + 1)) ** grid.dim


# ---------------------------------------------------------------------------
# functionals on single states
# ---------------------------------------------------------------------------


def compute_W(x: PhaseState, b: float) -> float:
    """Quadratic energy ``1/2 ||x||^2 + 2 b lam^{1/2} <u, v>``."""
    return float(W_values(x.u.flat(), x.v.flat(), b, x.N, x.lam, x.dim))


def compute_cal_W(x: PhaseState, b: float, spec: NonlinearitySpec, grid: CollocationGrid | None = None) -> float:
    """Nonlinear energy ``W(x) - int F(u)``.

    The integral uses the composite rule on ``grid``.  For a polynomial
    primitive of degree ``q`` it is exact once ``2 (M + 1) > q N``; the
    default grid is the smallest one with that property.
    """
    if grid is None:
        grid = build_grid(quadrature_size(spec, x.N), x.dim)
    return compute_W(x, b) - float(F_integrals(x.u.flat(), spec, x.N, grid))


def quadrature_size(spec: NonlinearitySpec, N: int) -> int:
    """Smallest grid size integrating ``F(u)`` exactly for polynomial ``F``."""
    d = spec.degree
    q = 2 if d is None else d + 1
    return max(N, (q * N) // 2 + 1)


def quadrature_error(x: PhaseState, spec: NonlinearitySpec, grid: CollocationGrid) -> float:
    """Change of ``int F(u)`` when the grid is refined to ``2 M + 1`` nodes."""
    fine = build_grid(2 * grid.M + 1, grid.dim)
    u = x.u.flat()
    return float(abs(F_integrals(u, spec, x.N, fine) - F_integrals(u, spec, x.N, grid)))


def compute_Z(w: PhaseState) -> float:
    """Half the squared X0 norm."""
    nu2, nv2, _ = norms_squared(w.u.flat(), w.v.flat(), w.N, w.lam, w.dim)
    return 0.5 * float(nu2 + nv2)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyConstants:
    """Constants behind the energy estimates.

    Attributes
    ----------
    b : float
        Coupling weight of ``W``.
    eta : float
        Young-inequality weight of the semilinear branch, ``(lam - 2 nu)/alpha1``.
    nu, C_nu : float
        Dissipativity slope and the matching constant ``M_nu |Omega|``.
    delta : float
        Decay rate of the homogeneous branch (``dW/dt <= -(4 delta/3) W``).
    omega, omega_bar : float
        Rates of the semilinear branch.
    d : float
        Normalisation ``1 / (c_bar (1 + r^(rho-1)))``.
    r, c_bar, rho : float
        Ball radius, primitive bound and growth exponent behind ``d``.
    b_sup : float
        Supremum of admissible ``b`` from the positivity inequality.
    b_sup_displayed : float
        The alternative closed form ``alpha0 / (lam^{1/2} (3 eta + alpha1))``,
        kept for comparison; it is not used.
    """

    b: float
    eta: float
    nu: float
    C_nu: float
    delta: float
    omega: float
    omega_bar: float
    d: float
    r: float
    c_bar: float
    rho: float
    b_sup: float
    b_sup_displayed: float
    alpha0: float
    alpha1: float
    lam: float

    @property
    def homogeneous_rate(self) -> float:
        """Exponential rate ``4 delta / 3`` of ``W`` along homogeneous solutions."""
        return 4.0 * self.delta / 3.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def select_constants(alpha0: float, alpha1: float, lam: float, nu: float, r: float = 1.0,
                     c_bar: float = 1.0, rho: float = 3.0, safety: float = 0.5,
                     C_nu: float = 0.0) -> EnergyConstants:
    """Pick ``b`` and derive every rate.

    ``b`` is ``min(1/4, safety * b_sup)`` where ``b_sup = alpha0 /
    (lam^{1/2} (3 + alpha1/eta))`` is the largest value keeping
    ``alpha0 - 3 b lam^{1/2} - b alpha1 lam^{1/2} / eta`` positive.  Since
    ``alpha1 / eta >= alpha1^2 / lam`` the same ``b`` also keeps the
    homogeneous slack ``alpha0 - 3 b lam^{1/2} - b alpha1^2 / lam^{1/2}``
    positive.

    Examples
    --------
    >>> c = select_constants(1.0, 1.0, 1.0, 0.25)
    >>> round(c.b, 12), round(c.omega, 12), round(c.delta, 12)
    (0.1, 0.1, 0.1)
    """
    problems = []
    if not lam > 0:
        problems.append(f"lambda must be positive, got {lam}")
    if not 0 < safety < 1:
        problems.append(f"safety must lie in (0, 1), got {safety}")
    if not r > 0:
        problems.append(f"r must be positive, got {r}")
    if not c_bar >= 1:
        problems.append(f"c_bar must be >= 1, got {c_bar}")
    if not rho > 1:
        problems.append(f"rho must exceed 1, got {rho}")
    if not alpha0 <= alpha1:
        problems.append(f"need alpha0 <= alpha1, got {alpha0} > {alpha1}")
    if lam > 0 and not 0 < nu < lam / 2:
        problems.append(f"nu must lie in (0, lambda/2) = (0, {lam / 2}), got {nu}")
    if C_nu < 0:
        problems.append(f"C_nu must be >= 0, got {C_nu}")
    if problems:
        raise InvalidArgumentError("; ".join(problems))
    if not alpha0 > 0:
        raise InfeasibleError(f"no positive b exists for alpha0 = {alpha0}")

    sl = math.sqrt(lam)
    eta = (lam - 2 * nu) / alpha1
    b_sup = alpha0 / (sl * (3 + alpha1 / eta))
    b = min(0.25, safety * b_sup)

    omega = min(alpha0 - 3 * b * sl - b * alpha1 * sl / eta, b * sl)
    delta = min(alpha0 - 3 * b * sl - b * alpha1**2 / sl, b * sl)
    d = 1.0 / (c_bar * (1 + r ** (rho - 1)))
    omega_bar = min(2 * omega, d * omega / 2)
    if min(omega, delta, omega_bar) <= 0:  # pragma: no cover - excluded by the choice of b
        raise InfeasibleError("derived rates are not positive")
    return EnergyConstants(
        b=b, eta=eta, nu=nu, C_nu=C_nu, delta=delta, omega=omega, omega_bar=omega_bar, d=d,
        r=r, c_bar=c_bar, rho=rho, b_sup=b_sup, b_sup_displayed=alpha0 / (sl * (3 * eta + alpha1)),
        alpha0=alpha0, alpha1=alpha1, lam=lam,
    )


def estimate_c_bar(spec: NonlinearitySpec, r: float, N: int, lam: float, dim: int = 1,
                   samples: int = 400, seed: int = 0) -> float:
    """Numerical bound for ``-int F(xi) <= c_bar ||xi||^2 (1 + ||xi||^(rho-1))``.

    Random low-pass fields with ``||xi||_{1/2} <= r`` are scanned; the largest
    ratio is doubled and clamped below by 1.
    """
    if spec.is_zero:
        return 1.0
    rng = np.random.default_rng(seed)
    w = mode_weights(N, lam, dim)
    mu = mode_eigenvalues(N, dim).ravel()
    raw = rng.standard_normal((samples, w.size)) / mu
    raw /= np.sqrt(raw**2 @ w)[:, None]
    scale = r * np.concatenate([[1.0], rng.uniform(0.0, 1.0, samples - 1)])
    scale = np.maximum(scale, 1e-3 * r)
    U = raw * scale[:, None]
    grid = build_grid(quadrature_size(spec, N), dim)
    negF = -F_integrals(U, spec, N, grid)
    n = scale
    ratio = negF / (n**2 * (1 + n ** (spec.rho - 1)))
    return float(max(1.0, 2.0 * ratio.max()))


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


def _rows(traj):
    """Yield (times, U, V) per trajectory for single or batched input."""
    if isinstance(traj, BatchTrajectory):
        for j in range(traj.size):
            yield traj.times, traj.U[:, j], traj.V[:, j]
    else:
        yield traj.times, traj.U, traj.V


@dataclass(frozen=True)
class DecayReport:
    """Worst value of ``W(x(t)) e^{rate (t - t0)} / W(x0)`` over the samples."""

    max_ratio: float
    argmax_time: float
    rate: float
    tol: float
    n_trajectories: int

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + self.tol

    @property
    def margin(self) -> float:
        return 1.0 + self.tol - self.max_ratio


def homogeneous_decay_certificate(traj, consts: EnergyConstants, tol: float | None = None,
                                  rate: float | None = None, dt: float | None = None) -> DecayReport:
    """Check ``W(x(t)) <= W(x0) e^{-(4 delta/3)(t - t0)}`` along homogeneous runs.

    Parameters
    ----------
    traj : Trajectory or BatchTrajectory
        Output of a homogeneous evolution.
    consts : EnergyConstants
        Supplies ``b`` and ``delta``.
    tol : float, optional
        Allowed excess over 1.  Defaults to ``10 dt^2 (t_end - t0)``.
    rate : float, optional
        Override of the exponential rate; by default ``4 delta / 3``.
    dt : float, optional
        Integrator step behind the default ``tol``; the largest sampling gap
        is used when it is not given.
    """
    rate = consts.homogeneous_rate if rate is None else rate
    worst, t_worst, count = 0.0, float(traj.times[0]), 0
    times = np.asarray(traj.times)
    if tol is None:
        if dt is None:
            dt = float(np.max(np.diff(times))) if times.size > 1 else 0.0
        tol = 10.0 * dt**2 * float(times[-1] - times[0])
    for t, U, V in _rows(traj):
        count += 1
        W = W_values(U, V, consts.b, traj.N, traj.lam, traj.dim)
        if W[0] <= 0.0:
            continue
        ratio = W * np.exp(rate * (t - t[0])) / W[0]
        i = int(np.argmax(ratio))
        if ratio[i] > worst:
            worst, t_worst = float(ratio[i]), float(t[i])
    return DecayReport(worst, t_worst, rate, tol, count)


@dataclass(frozen=True)
class SemilinearReport:
    """Discrete check of ``calW(t+h) <= calW(t) e^{-omega_bar h} + 2 b lam^{1/2} C_nu h (1 + tol)``."""

    worst_excess: float
    worst_time: float
    checked_steps: int
    skipped_steps: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst_excess <= 0.0


def semilinear_certificate(traj, consts: EnergyConstants, cfg: ProcessConfig,
                           tol: float = 1e-6) -> SemilinearReport:
    """Step-by-step energy inequality along a semilinear trajectory.

    Only steps starting inside ``||u||_{1/2} <= r`` are checked.  The excess
    is measured after allowing a relative rounding slack of ``1e-12``.
    """
    grid = build_grid(quadrature_size(cfg.nonlinearity, cfg.N), cfg.dim)
    forcing = 2 * consts.b * math.sqrt(consts.lam) * consts.C_nu
    worst, t_worst, checked, skipped = -math.inf, float(traj.times[0]), 0, 0
    for t, U, V in _rows(traj):
        W = W_values(U, V, consts.b, cfg.N, cfg.lam, cfg.dim) - F_integrals(U, cfg.nonlinearity, cfg.N, grid)
        nu2, _, _ = norms_squared(U, V, cfg.N, cfg.lam, cfg.dim)
        h = np.diff(t)
        inside = np.sqrt(nu2[:-1]) <= consts.r
        bound = W[:-1] * np.exp(-consts.omega_bar * h) + forcing * h * (1 + tol)
        excess = W[1:] - bound - 1e-12 * np.maximum(np.abs(W[:-1]), np.abs(W[1:]))
        checked += int(inside.sum())
        skipped += int((~inside).sum())
        if inside.any():
            i = int(np.argmax(np.where(inside, excess, -np.inf)))
            if excess[i] > worst:
                worst, t_worst = float(excess[i]), float(t[i])
    return SemilinearReport(worst if checked else 0.0, t_worst, checked, skipped, tol)


@dataclass(frozen=True)
class EnvelopeFit:
    """Absorbing-ball fit for trajectories started in one ball."""

    radius: float
    K: float
    K1: float
    rate: float
    K_certified: float
    entry_time: float
    exited_after_entry: bool
    times: np.ndarray = field(repr=False)
    envelope: np.ndarray = field(repr=False)

    @property
    def absorbing_radius(self) -> float:
        return math.sqrt(2.0 * self.K1)


@dataclass(frozen=True)
class AbsorbingReport:
    """Comparison of envelope fits across initial radii.

    ``K1_ratio`` is the ratio of the largest to the smallest plateau level.
    Levels at or below ``zero_level`` are treated as an exact zero plateau
    (all trajectories decay to the zero state), in which case the ratio is
    reported as 1.
    """

    fits: tuple
    K1_ratio: float
    zero_level: float
    rate_floor: float

    @property
    def K1(self) -> float:
        return max(f.K1 for f in self.fits)

    @property
    def common_K1(self) -> bool:
        return self.K1_ratio <= 2.0

    @property
    def entered_and_stayed(self) -> bool:
        return all(math.isfinite(f.entry_time) and not f.exited_after_entry for f in self.fits)

    @property
    def rate_certified(self) -> bool:
        return all(f.rate >= self.rate_floor for f in self.fits)

    @property
    def passed(self) -> bool:
        return self.common_K1 and self.entered_and_stayed and self.rate_certified


def _envelope(trajs) -> tuple[np.ndarray, np.ndarray]:
    times, env = None, None
    for traj in trajs:
        for t, U, V in _rows(traj):
            nu2, nv2, _ = norms_squared(U, V, traj.N, traj.lam, traj.dim)
            e = nu2 + nv2
            if times is None:
                times, env = np.asarray(t, dtype=float), e.copy()
            else:
                if t.shape != times.shape or np.any(t != times):
                    raise InvalidArgumentError("trajectories must share their sampling times")
                env = np.maximum(env, e)
    if times is None:
        raise InvalidArgumentError("no trajectories given")
    return times, env


def fit_envelope(trajs, radius: float, omega_bar: float, tail: float = 0.2,
                 zero_level: float = 1e-12) -> EnvelopeFit:
    """Fit ``||x(t)||^2 <= K e^{-rate (t - t0)} + K1`` to the upper envelope.

    ``K1`` is the plateau: the envelope maximum over the final ``tail``
    fraction of the horizon (at least ``zero_level``).  The rate comes from a
    least-squares line through ``log(E - K1)`` where that excess is
    resolved, and ``K`` is then raised until the bound holds at every sample.
    ``K_certified`` is the analogous constant for the certified rate
    ``omega_bar``.

    Raises
    ------
    DissipativityFailure
        If the envelope is still growing over the tail window.
    """
    t, E = _envelope(trajs)
    t0 = t[0]
    n_tail = max(2, int(math.ceil(tail * t.size)))
    tail_E = E[-n_tail:]
    head_max = E[: t.size - n_tail].max() if t.size > n_tail else E[0]
    if tail_E[-1] > 2.0 * max(head_max, zero_level) and tail_E[-1] > tail_E[0]:
        raise DissipativityFailure(
            f"norm envelope still growing at t={t[-1]:g} (E={tail_E[-1]:.3g}); no absorbing ball seen"
        )
    K1 = max(float(tail_E.max()), zero_level)

    excess = E - K1
    use = excess > 1e-3 * max(excess.max(), 0.0)
    if use.sum() >= 2 and excess.max() > 0:
        slope = np.polyfit(t[use] - t0, np.log(excess[use]), 1)[0]
        rate = max(float(-slope), 0.0)
    else:
        rate = math.inf
    pos = excess > 0
    if pos.any():
        r_eff = rate if math.isfinite(rate) else 0.0
        K = float(np.max(excess[pos] * np.exp(r_eff * (t[pos] - t0))))
        K_cert = float(np.max(excess[pos] * np.exp(omega_bar * (t[pos] - t0))))
    else:
        K = K_cert = 0.0

    ball = 2.0 * K1
    inside = E <= ball
    if inside.any():
        first = int(np.argmax(inside))
        entry = float(t[first])
        exited = bool(not inside[first:].all())
    else:
        entry, exited = math.inf, False
    return EnvelopeFit(radius, K, K1, rate, K_cert, entry, exited, t, E)


def absorbing_certificate(groups, consts: EnergyConstants, tail: float = 0.2,
                          zero_level: float = 1e-12) -> AbsorbingReport:
    """Absorbing-ball certificate across several initial radii.

    Parameters
    ----------
    groups : mapping
        ``radius -> iterable of Trajectory/BatchTrajectory`` sharing times.
    consts : EnergyConstants
        ``omega_bar`` is the rate the fitted decay must at least match.
    """
    fits = tuple(fit_envelope(trajs, float(R), consts.omega_bar, tail, zero_level)
                 for R, trajs in sorted(groups.items()))
    levels = [f.K1 for f in fits]
    if max(levels) <= zero_level:
        ratio = 1.0
    else:
        ratio = max(levels) / min(levels)
    return AbsorbingReport(fits, float(ratio), zero_level, consts.omega_bar)
