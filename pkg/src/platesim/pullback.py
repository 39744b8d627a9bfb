"""Point-cloud approximation of pullback attractor sections.

A bounded set of initial data is replaced by a finite cloud of states.  The
pullback image ``S(t, t - n T) B`` is computed for growing ``n`` until two
successive images agree in both Hausdorff semidistances.  All distances are
taken in the X0 norm, and every comparison is reported next to the cloud
resolution (largest nearest-neighbour spacing), because a finite cloud can
only resolve a compact set up to that scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from platesim.coefficients import damping_gap
from platesim.errors import DimensionMismatchError, InvalidArgumentError
from platesim.evolution import ProcessConfig, evolve_batch, step_schedule
from platesim.spectral import PhaseState, gram_factor, mode_eigenvalues

# ---------------------------------------------------------------------------
# clouds and distances
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateCloud:
    """Finite set of phase states at a common time.

    ``U`` and ``V`` hold flat sine coefficients, one state per row.
    ``seed`` and ``radius`` record how the originating ball was sampled.
    """

    time: float
    U: np.ndarray
    V: np.ndarray
    lam: float
    N: int
    dim: int = 1
    seed: int | None = None
    radius: float | None = None

    def __post_init__(self):
        U = np.array(self.U, dtype=float, ndmin=2)
        V = np.array(self.V, dtype=float, ndmin=2)
        if U.shape != V.shape:
            raise DimensionMismatchError(f"U{U.shape} and V{V.shape} differ")
        if U.shape[0] == 0:
            raise InvalidArgumentError("a state cloud needs at least one point")
        if U.shape[1] != self.N**self.dim:
            raise DimensionMismatchError(f"rows have {U.shape[1]} coefficients, expected {self.N**self.dim}")
        U.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    def __len__(self) -> int:
        return self.U.shape[0]

    @property
    def points(self) -> list[PhaseState]:
        return [PhaseState.from_flat(u, v, self.N, self.lam, self.dim) for u, v in zip(self.U, self.V)]

    def embed(self) -> np.ndarray:
        """Coordinates in which the Euclidean distance is the X0 distance."""
        mu = mode_eigenvalues(self.N, self.dim).ravel()
        g = gram_factor(self.dim)
        return np.hstack([self.U * np.sqrt(g * (mu**2 + self.lam)), self.V * math.sqrt(g)])

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.embed(), axis=1)

    def with_states(self, U, V, time: float) -> "StateCloud":
        return StateCloud(time, U, V, self.lam, self.N, self.dim, self.seed, self.radius)

    @classmethod
    def single(cls, x: PhaseState, time: float = 0.0) -> "StateCloud":
        return cls(time, x.u.flat()[None], x.v.flat()[None], x.lam, x.N, x.dim)


def _compatible(A: StateCloud, B: StateCloud) -> None:
    if (A.N, A.dim, A.lam) != (B.N, B.dim, B.lam):
        raise DimensionMismatchError(
            f"clouds differ in discretisation: (N, dim, lam) = {(A.N, A.dim, A.lam)} vs {(B.N, B.dim, B.lam)}"
        )


def hausdorff_semidistance(A: StateCloud, B: StateCloud) -> float:
    """``sup_{a in A} inf_{b in B} ||a - b||_X0``; asymmetric."""
    _compatible(A, B)
    d, _ = cKDTree(B.embed()).query(A.embed(), k=1)
    return float(np.max(d))


def hausdorff_distance(A: StateCloud, B: StateCloud) -> float:
    return max(hausdorff_semidistance(A, B), hausdorff_semidistance(B, A))


def cloud_resolution(A: StateCloud) -> float:
    """Largest nearest-neighbour spacing (0 for a single point)."""
    if len(A) < 2:
        return 0.0
    d, _ = cKDTree(A.embed()).query(A.embed(), k=2)
    return float(np.max(d[:, 1]))


def sample_ball(R: float, m: int, seed: int, N: int, lam: float, dim: int = 1,
                time: float = 0.0, shell: bool = False) -> StateCloud:
    """Deterministic low-pass sample of the closed X0 ball of radius ``R``.

    Coefficients are Gaussian with standard deviation ``1/mu_k`` (``k^-2`` in
    one dimension), each state is normalised and then scaled to a radius
    ``R s``.  ``s = 1`` for the first state (and for all of them when
    ``shell`` is set); otherwise ``s = U^(1/4)`` with ``U`` uniform, which
    leans toward the boundary where the slowest-absorbed data sit.
    """
    if R < 0:
        raise InvalidArgumentError(f"radius must be >= 0, got {R}")
    if m < 1:
        raise InvalidArgumentError(f"cloud size must be >= 1, got {m}")
    nm = N**dim
    if R == 0:
        z = np.zeros((m, nm))
        return StateCloud(time, z, z, lam, N, dim, seed, 0.0)
    rng = np.random.default_rng(seed)
    mu = mode_eigenvalues(N, dim).ravel()
    U = rng.standard_normal((m, nm)) / mu
    V = rng.standard_normal((m, nm)) / mu
    cloud = StateCloud(time, U, V, lam, N, dim, seed, R)
    n = cloud.norms()
    s = np.ones(m) if shell else rng.uniform(0.0, 1.0, m) ** 0.25
    s[0] = 1.0
    scale = R * s / n
    return StateCloud(time, U * scale[:, None], V * scale[:, None], lam, N, dim, seed, R)


def push_forward(cloud: StateCloud, t: float, cfg: ProcessConfig, *, threads: int | None = None) -> StateCloud:
    """Image ``S(t, cloud.time)`` of every point."""
    if (cfg.N, cfg.dim, cfg.lam) != (cloud.N, cloud.dim, cloud.lam):
        raise DimensionMismatchError("cloud and process configuration use different discretisations")
    bt = evolve_batch(cloud.U, cloud.V, cloud.time, t, cfg, record_every=None, threads=threads)
    return cloud.with_states(bt.U[-1], bt.V[-1], t)


# ---------------------------------------------------------------------------
# pullback convergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRecord:
    n: int
    tau: float
    dist_forward: float
    dist_backward: float


@dataclass(frozen=True, eq=False)
class AttractorSection:
    """Approximation of the attractor section at ``time``.

    ``history[i]`` compares the images started at ``t - (i+2) T_back`` and
    ``t - (i+1) T_back``: ``dist_forward`` is the semidistance from the newer
    image to the older one and ``dist_backward`` the reverse.
    """

    time: float
    epsilon: float | None
    cloud: StateCloud
    tau_schedule: tuple
    history: tuple
    converged: bool
    tol: float
    T_back: float

    @property
    def convergence(self) -> tuple:
        return tuple(max(h.dist_forward, h.dist_backward) for h in self.history)

    @property
    def resolution(self) -> float:
        return cloud_resolution(self.cloud)

    @property
    def n_used(self) -> int:
        return len(self.tau_schedule)


def _check_T_back(t: float, T_back: float, cfg: ProcessConfig) -> None:
    if not T_back > 0:
        raise InvalidArgumentError(f"T_back must be positive, got {T_back}")
    _, rem = step_schedule(t - T_back, t, cfg.dt)
    if rem:
        raise InvalidArgumentError(f"T_back={T_back} is not a multiple of dt={cfg.dt}")


def pullback_converge(t: float, B: StateCloud, cfg: ProcessConfig, epsilon: float | None = None,
                      T_back: float = 5.0, n_max: int = 40, tol: float = 1e-3,
                      *, threads: int | None = None) -> AttractorSection:
    """Pullback images ``C_n = S(t, t - n T_back) B`` until they settle.

    Stops at the first ``n >= 2`` with both semidistances between ``C_n``
    and ``C_{n-1}`` at most ``tol``, or at ``n = n_max`` (then the returned
    section is flagged as not converged).  ``tol = inf`` returns after the
    first comparison.
    """
    if epsilon is not None:
        cfg = cfg.with_epsilon(epsilon)
    _check_T_back(t, T_back, cfg)
    if n_max < 2:
        raise InvalidArgumentError("n_max must be >= 2 (convergence compares two images)")

    def image(n):
        tau = t - n * T_back
        return push_forward(B.with_states(B.U, B.V, tau), t, cfg, threads=threads)

    prev = image(1)
    taus = [t - T_back]
    history = []
    converged = False
    for n in range(2, n_max + 1):
        cur = image(n)
        taus.append(t - n * T_back)
        fwd = hausdorff_semidistance(cur, prev)
        bwd = hausdorff_semidistance(prev, cur)
        history.append(ConvergenceRecord(n, t - n * T_back, fwd, bwd))
        prev = cur
        if fwd <= tol and bwd <= tol:
            converged = True
            break
    eps = epsilon if epsilon is not None else (cfg.damping.epsilon if cfg.damping is not None else None)
    return AttractorSection(t, eps, prev, tuple(taus), tuple(history), converged, tol, T_back)


@dataclass(frozen=True)
class InvarianceReport:
    """Semidistances between the forward image ``S(t, s) A(s)`` and ``A(t)``."""

    s: float
    t: float
    image_to_section: float
    section_to_image: float
    resolution: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.image_to_section <= self.threshold and self.section_to_image <= self.threshold


def check_invariance(section_s: AttractorSection, section_t: AttractorSection, cfg: ProcessConfig,
                     epsilon: float | None = None, tol: float = 1e-3, resolution_factor: float = 1.0,
                     *, threads: int | None = None) -> InvarianceReport:
    """Compare ``S(t, s) A(s)`` with ``A(t)`` in both directions.

    Passes when both semidistances are at most
    ``max(tol, resolution_factor * resolution)``, the resolution being the
    larger of the two clouds' nearest-neighbour spacings.
    """
    s, t = section_s.time, section_t.time
    if s > t:
        raise InvalidArgumentError(f"need s <= t, got s={s}, t={t}")
    if epsilon is not None:
        cfg = cfg.with_epsilon(epsilon)
    image = push_forward(section_s.cloud, t, cfg, threads=threads)
    target = section_t.cloud
    res = max(cloud_resolution(image), cloud_resolution(target))
    return InvarianceReport(
        s, t,
        hausdorff_semidistance(image, target),
        hausdorff_semidistance(target, image),
        res,
        max(tol, resolution_factor * res),
    )


# ---------------------------------------------------------------------------
# absorption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AbsorptionRow:
    radius: float
    tau0: float
    max_norm_by_tau: tuple
    absorbed: bool


@dataclass(frozen=True)
class AbsorptionReport:
    t: float
    absorbing_radius: float
    taus: tuple
    rows: tuple

    @property
    def monotone(self) -> bool:
        """Larger initial radii never get absorbed later than smaller ones."""
        ok = [r for r in self.rows if r.absorbed]
        return all(b.tau0 <= a.tau0 for a, b in zip(ok, ok[1:]))

    @property
    def passed(self) -> bool:
        return all(r.absorbed for r in self.rows) and self.monotone


def absorption_scan(t: float, radii, cfg: ProcessConfig, epsilon: float | None = None, *,
                    absorbing_radius: float, lattice_step: float = 1.0, horizon: float = 20.0,
                    m: int = 16, seed: int = 0, threads: int | None = None) -> AbsorptionReport:
    """Entry times into a candidate absorbing ball.

    For each radius ``R`` a cloud sampled from ``B_R`` is started at every
    lattice time ``tau = t - j * lattice_step`` (``0 <= j * lattice_step <=
    horizon``) and pushed to ``t``.  ``tau0`` is the latest lattice time such
    that every earlier tested start lands inside the ball.  If even the
    earliest start lands outside, the row is flagged as not absorbed.
    """
    if epsilon is not None:
        cfg = cfg.with_epsilon(epsilon)
    n_lat = int(round(horizon / lattice_step))
    taus = tuple(t - j * lattice_step for j in range(n_lat + 1))
    rows = []
    for R in sorted(float(r) for r in radii):
        cloud = sample_ball(R, m, seed, cfg.N, cfg.lam, cfg.dim)
        norms = []
        for tau in taus:
            img = push_forward(cloud.with_states(cloud.U, cloud.V, tau), t, cfg, threads=threads)
            norms.append(float(img.norms().max()))
        inside = [n <= absorbing_radius for n in norms]
        if not inside[-1]:
            rows.append(AbsorptionRow(R, -math.inf, tuple(norms), False))
            continue
        j = len(taus) - 1
        while j > 0 and inside[j - 1]:
            j -= 1
        rows.append(AbsorptionRow(R, taus[j], tuple(norms), True))
    return AbsorptionReport(t, absorbing_radius, taus, tuple(rows))


# ---------------------------------------------------------------------------
# perturbation in the damping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviationReport:
    """Squared X0 deviation between the perturbed and unperturbed solutions.

    The bound is ``K_tilde * gap * (e^{K (t - tau)} - 1) / K`` (``K_tilde *
    gap * (t - tau)`` when ``K = 0``).
    """

    epsilon: float
    gap: float
    K: float
    K_tilde: float
    times: np.ndarray = field(repr=False)
    deviation: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())

    @property
    def final_bound(self) -> float:
        return float(self.bound[-1])

    @property
    def worst_ratio(self) -> float:
        pos = self.deviation > 0
        if not pos.any():
            return 0.0
        return float(np.max(self.deviation[pos] / self.bound[pos]))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.deviation <= self.bound))


def _sq_norm(U, V, cfg: ProcessConfig):
    return U**2 @ cfg.weights_u + gram_factor(cfg.dim) * np.einsum("...k,...k->...", V, V)


def trajectory_deviation_bound(x0: PhaseState, tau: float, t: float, cfg: ProcessConfig, epsilon: float,
                               *, record_every: int = 10, probe: float = 1e-6,
                               gap_samples: int = 201) -> DeviationReport:
    """Run ``S_eps`` and ``S_0`` from ``x0`` and compare with a Gronwall bound.

    With ``w`` the difference of the two solutions, the energy identity gives
    ``d/dt ||w||^2 <= K ||w||^2 + K_tilde ||a_eps - a_0||_inf``, where
    ``K_tilde = 2 sup||v_eps|| (sup||v_eps|| + sup||v_0||)`` bounds the
    forcing by the damping gap.  ``K`` is measured as the largest local
    growth rate of the squared distance between ``S_0`` solutions started
    ``probe`` apart (the difference dynamics with the damping forcing
    switched off), clamped at 0.
    """
    if t < tau:
        raise InvalidArgumentError(f"need t >= tau, got t={t}, tau={tau}")
    cfg_e = cfg.with_epsilon(epsilon)
    cfg_0 = cfg.with_epsilon(0.0)
    u0, v0 = x0.u.flat(), x0.v.flat()
    probe_u = np.zeros_like(u0)
    probe_u[0] = 1.0
    probe_u *= probe / math.sqrt(cfg.weights_u[0])

    run_0 = evolve_batch(np.stack([u0, u0 + probe_u]), np.stack([v0, v0]), tau, t, cfg_0,
                         record_every=record_every)
    run_e = evolve_batch(u0[None], v0[None], tau, t, cfg_e, record_every=record_every)
    times = run_0.times
    Ue, Ve = run_e.U[:, 0], run_e.V[:, 0]
    U0, V0 = run_0.U[:, 0], run_0.V[:, 0]
    dev = _sq_norm(Ue - U0, Ve - V0, cfg)

    gap = damping_gap(cfg_e.damping, cfg.grid, (tau, t), gap_samples) if t > tau else 0.0
    g = gram_factor(cfg.dim)
    ve = np.sqrt(g * np.einsum("ik,ik->i", Ve, Ve)).max()
    v0n = np.sqrt(g * np.einsum("ik,ik->i", V0, V0)).max()
    K_tilde = 2.0 * ve * (ve + v0n)

    pdist = _sq_norm(run_0.U[:, 1] - U0, run_0.V[:, 1] - V0, cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.diff(np.log(pdist)) / np.diff(times)
    rates = rates[np.isfinite(rates)]
    K = max(float(rates.max()) if rates.size else 0.0, 0.0)

    span = times - tau
    if K > 0:
        bound = K_tilde * gap * np.expm1(K * span) / K
    else:
        bound = K_tilde * gap * span
    return DeviationReport(float(epsilon), float(gap), K, float(K_tilde), times, dev, bound)


@dataclass(frozen=True)
class SemicontinuityRow:
    eps: float
    damping_gap_sup: float
    hausdorff_eps_to_0: float
    hausdorff_0_to_eps: float
    cloud_resolution: float
    gronwall_bound: float
    max_traj_deviation: float
    converged: bool
    deviation_passed: bool

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class SemicontinuityReport:
    """Distances between perturbed and unperturbed attractor sections.

    Rows are sorted by ``eps`` in decreasing order.  ``C_fit`` is the constant
    of the curve ``resolution + C gap^{1/2}`` fitted on the largest ``eps``.
    """

    time: float
    rows: tuple
    C_fit: float
    sections: dict = field(repr=False, default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.rows)

    @property
    def monotone(self) -> bool:
        """Distances do not increase as eps decreases, up to resolution."""
        rs = self.rows
        return all(
            later.hausdorff_eps_to_0 <= earlier.hausdorff_eps_to_0 + max(earlier.cloud_resolution, later.cloud_resolution)
            for i, earlier in enumerate(rs) for later in rs[i + 1:]
        )

    @property
    def within_fit(self) -> bool:
        return all(
            r.hausdorff_eps_to_0 <= r.cloud_resolution + self.C_fit * math.sqrt(r.damping_gap_sup) * (1 + 1e-12)
            for r in self.rows
        )

    @property
    def contrast(self) -> bool:
        """If the largest-eps distance is resolved (> 3x resolution), it is at least twice the smallest-eps one."""
        nonzero = [r for r in self.rows if r.eps > 0]
        if len(nonzero) < 2:
            return True
        big, small = nonzero[0], nonzero[-1]
        if big.hausdorff_eps_to_0 <= 3 * big.cloud_resolution:
            return True
        return big.hausdorff_eps_to_0 >= 2 * small.hausdorff_eps_to_0

    @property
    def deviations_pass(self) -> bool:
        return all(r.deviation_passed for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.all_converged and self.monotone and self.within_fit and self.contrast and self.deviations_pass


def semicontinuity_experiment(t: float, eps_list, cfg: ProcessConfig, *, m: int = 64, R: float = 2.0,
                              seed: int = 0, T_back: float = 5.0, n_max: int = 40, tol: float = 1e-3,
                              deviation_window: float = 10.0, threads: int | None = None
                              ) -> SemicontinuityReport:
    """Attractor sections for every ``eps`` from one shared seed cloud.

    The Gronwall comparison starts from the first cloud point at
    ``t - deviation_window``.
    """
    eps_sorted = sorted({float(e) for e in eps_list}, reverse=True)
    if 0.0 not in eps_sorted:
        raise InvalidArgumentError("the eps list must contain 0")
    B = sample_ball(R, m, seed, cfg.N, cfg.lam, cfg.dim)
    sections = {e: pullback_converge(t, B, cfg, e, T_back, n_max, tol, threads=threads) for e in eps_sorted}
    ref = sections[0.0]
    x0 = B.points[0]

    rows = []
    for e in eps_sorted:
        sec = sections[e]
        gap = damping_gap(cfg.with_epsilon(e).damping, cfg.grid) if e else 0.0
        dev = trajectory_deviation_bound(x0, t - deviation_window, t, cfg, e)
        rows.append(SemicontinuityRow(
            eps=e,
            damping_gap_sup=gap,
            hausdorff_eps_to_0=hausdorff_semidistance(sec.cloud, ref.cloud),
            hausdorff_0_to_eps=hausdorff_semidistance(ref.cloud, sec.cloud),
            cloud_resolution=max(cloud_resolution(sec.cloud), cloud_resolution(ref.cloud)),
            gronwall_bound=dev.final_bound,
            max_traj_deviation=dev.max_deviation,
            converged=sec.converged,
            deviation_passed=dev.passed,
        ))
    top = rows[0]
    if top.eps > 0 and top.damping_gap_sup > 0:
        C = max(top.hausdorff_eps_to_0 - top.cloud_resolution, 0.0) / math.sqrt(top.damping_gap_sup)
    else:
        C = 0.0
    return SemicontinuityReport(t, tuple(rows), C, sections)
