"""Point clouds, pullback sections, invariance, absorption and perturbation bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platesim.coefficients import DampingSpec, NonlinearitySpec, Profile
from platesim.energy import select_constants
from platesim.errors import DimensionMismatchError, InvalidArgumentError
from platesim.evolution import ProcessConfig, constant_damping
from platesim.pullback import (
    StateCloud,
    absorption_scan,
    check_invariance,
    cloud_resolution,
    hausdorff_distance,
    hausdorff_semidistance,
    pullback_converge,
    push_forward,
    sample_ball,
    semicontinuity_experiment,
    trajectory_deviation_bound,
)
from platesim.spectral import PhaseState, basis_field, norm_X0, zero_field

N = 8
CUBIC5 = NonlinearitySpec.make("cubic", kappa=5.0)
PERIODIC = DampingSpec(Profile.make("sin_t", c0=1.0, c1=0.5, omega=1.0), Profile.make("sin_x", c=1.0),
                       alpha0=0.5, alpha1=2.0)


def cloud(seed, m=12, R=1.0):
    return sample_ball(R, m, seed, N, 1.0)


def subcloud(c, idx):
    return c.with_states(c.U[idx], c.V[idx], c.time)


class TestHausdorff:
    def test_self_distance(self):
        c = cloud(0)
        assert hausdorff_distance(c, c) == 0.0

    def test_subset_semidistance(self):
        c = cloud(1)
        assert hausdorff_semidistance(subcloud(c, [0, 3, 5]), c) == 0.0
        assert hausdorff_semidistance(c, subcloud(c, [0, 3, 5])) > 0.0

    def test_single_pair(self):
        z = StateCloud.single(PhaseState.zero(2, 1.0))
        e = basis_field(1, 2)
        x = (1.0 / norm_X0(PhaseState(e, zero_field(2), 1.0))) * PhaseState(e, zero_field(2), 1.0)
        assert hausdorff_semidistance(z, StateCloud.single(x)) == pytest.approx(1.0, rel=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_triangle_inequality(self, s1, s2, s3):
        A, B, C = cloud(s1, 6), cloud(s2, 7), cloud(s3, 5)
        assert hausdorff_semidistance(A, C) <= hausdorff_semidistance(A, B) + hausdorff_semidistance(B, C) + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 10**6))
    def test_brute_force_oracle(self, s1, s2):
        A, B = cloud(s1, 5), cloud(s2, 6)
        d = max(min(norm_X0(a - b) for b in B.points) for a in A.points)
        assert hausdorff_semidistance(A, B) == pytest.approx(d, rel=1e-12)

    def test_mismatched_discretisation(self):
        with pytest.raises(DimensionMismatchError):
            hausdorff_semidistance(cloud(0), sample_ball(1.0, 3, 0, 6, 1.0))

    def test_resolution_of_single_point(self):
        assert cloud_resolution(StateCloud.single(PhaseState.zero(3, 1.0))) == 0.0


class TestSampleBall:
    def test_zero_radius(self):
        c = sample_ball(0.0, 1, 3, N, 1.0)
        assert c.points[0] == PhaseState.zero(N, 1.0)

    @given(st.floats(0.0, 100.0), st.integers(1, 40), st.integers(0, 2**32 - 1))
    def test_inside_ball(self, R, m, seed):
        c = sample_ball(R, m, seed, N, 1.0)
        assert np.all(c.norms() <= R * (1 + 1e-12))
        assert len(c.points) == m

    def test_first_point_on_sphere(self):
        assert sample_ball(3.0, 5, 0, N, 1.0).norms()[0] == pytest.approx(3.0)

    def test_shell(self):
        assert np.allclose(sample_ball(2.0, 9, 1, N, 1.0, shell=True).norms(), 2.0)

    def test_deterministic(self):
        a, b = sample_ball(1.0, 10, 42, N, 1.0), sample_ball(1.0, 10, 42, N, 1.0)
        assert np.array_equal(a.U, b.U) and np.array_equal(a.V, b.V)
        assert not np.array_equal(a.U, sample_ball(1.0, 10, 43, N, 1.0).U)

    def test_negative_radius(self):
        with pytest.raises(InvalidArgumentError):
            sample_ball(-1.0, 3, 0, N, 1.0)


class TestPullback:
    homog = ProcessConfig(constant_damping(1.0), N=N, dt=0.01)

    def test_homogeneous_collapse_bound(self):
        B = cloud(5, m=10, R=2.0)
        sec = pullback_converge(0.0, B, self.homog, T_back=2.0, n_max=40, tol=1e-6)
        delta = select_constants(1.0, 1.0, 1.0, 0.25).delta
        zero = StateCloud.single(PhaseState.zero(N, 1.0))
        n = sec.n_used
        bound = 3 * B.norms().max() * math.exp(-(2 * delta / 3) * n * sec.T_back)
        assert sec.converged
        assert hausdorff_semidistance(sec.cloud, zero) <= bound

    def test_infinite_tolerance_stops_at_first_comparison(self):
        sec = pullback_converge(0.0, cloud(6), self.homog, T_back=1.0, tol=math.inf)
        assert sec.converged and len(sec.history) == 1 and sec.n_used == 2

    def test_not_converged_flag(self):
        sec = pullback_converge(0.0, cloud(6), self.homog, T_back=0.5, n_max=3, tol=0.0)
        assert not sec.converged and len(sec.history) == 2

    def test_T_back_must_be_step_multiple(self):
        with pytest.raises(InvalidArgumentError):
            pullback_converge(0.0, cloud(6), self.homog, T_back=0.005)

    def test_nontrivial_section(self):
        cfg = ProcessConfig(constant_damping(1.0), CUBIC5, N=N, dt=0.01)
        sec = pullback_converge(0.0, cloud(7, m=20, R=5.0), cfg, T_back=5.0, tol=1e-3)
        assert sec.converged
        # the section holds states at the scale of the nonzero steady states
        assert sec.cloud.norms().max() > 3.0

    def test_push_forward_zero_time(self):
        c = cloud(8)
        out = push_forward(c, c.time, self.homog)
        assert np.array_equal(out.U, c.U)


class TestInvariance:
    def test_homogeneous(self):
        cfg = ProcessConfig(constant_damping(1.0), N=N, dt=0.01)
        B = cloud(9, R=2.0)
        s_sec = pullback_converge(-2.0, B, cfg, T_back=5.0, tol=1e-8)
        t_sec = pullback_converge(0.0, B, cfg, T_back=5.0, tol=1e-8)
        rep = check_invariance(s_sec, t_sec, cfg)
        assert rep.image_to_section < 1e-6 and rep.section_to_image < 1e-6
        assert rep.passed

    def test_same_time(self):
        cfg = ProcessConfig(PERIODIC, CUBIC5, N=N, dt=0.01)
        sec = pullback_converge(0.0, cloud(10, R=3.0), cfg, T_back=5.0)
        rep = check_invariance(sec, sec, cfg)
        assert rep.image_to_section == 0.0 and rep.section_to_image == 0.0

    def test_periodic_semilinear(self):
        cfg = ProcessConfig(PERIODIC, CUBIC5, N=N, dt=0.01)
        B = cloud(11, m=30, R=4.0)
        s_sec = pullback_converge(-3.0, B, cfg, T_back=5.0)
        t_sec = pullback_converge(0.0, B, cfg, T_back=5.0)
        assert s_sec.converged and t_sec.converged
        assert check_invariance(s_sec, t_sec, cfg, resolution_factor=3.0).passed

    def test_order_of_times(self):
        cfg = ProcessConfig(constant_damping(1.0), N=N, dt=0.01)
        a = pullback_converge(0.0, cloud(1), cfg, T_back=1.0, tol=math.inf)
        b = pullback_converge(-1.0, cloud(1), cfg, T_back=1.0, tol=math.inf)
        with pytest.raises(InvalidArgumentError):
            check_invariance(a, b, cfg)


class TestAbsorption:
    def test_zero_radius_absorbed_immediately(self):
        cfg = ProcessConfig(PERIODIC, CUBIC5, N=N, dt=0.01)
        rep = absorption_scan(0.0, [0.0], cfg, absorbing_radius=1.0, horizon=3.0, m=2)
        assert rep.rows[0].tau0 == 0.0

    def test_monotone_in_radius(self):
        cfg = ProcessConfig(PERIODIC, CUBIC5, N=N, dt=0.01)
        rep = absorption_scan(0.0, [1.0, 5.0, 20.0], cfg, absorbing_radius=5.2, horizon=10.0, m=6)
        assert rep.passed
        taus = [r.tau0 for r in rep.rows]
        assert taus == sorted(taus, reverse=True)

    def test_homogeneous_entry_time_grows_like_log_radius(self):
        cfg = ProcessConfig(constant_damping(1.0), N=N, dt=0.01)
        rep = absorption_scan(0.0, [1.0, 100.0], cfg, absorbing_radius=0.01, lattice_step=0.5,
                              horizon=40.0, m=4)
        assert rep.passed
        small, big = rep.rows
        # slowest mode decays like e^{-t}: two decades of radius cost about log(100)
        assert small.tau0 - big.tau0 == pytest.approx(math.log(100.0), abs=1.0)

    def test_unabsorbed_row(self):
        cfg = ProcessConfig(constant_damping(1.0), N=N, dt=0.01)
        rep = absorption_scan(0.0, [10.0], cfg, absorbing_radius=1e-9, horizon=2.0, m=2)
        assert not rep.rows[0].absorbed and not rep.passed


class TestDeviation:
    cfg = ProcessConfig(PERIODIC, NonlinearitySpec.make("cubic", kappa=1.0), N=N, dt=0.01)
    x0 = sample_ball(2.0, 1, 3, N, 1.0).points[0]

    def test_unperturbed(self):
        rep = trajectory_deviation_bound(self.x0, -5.0, 0.0, self.cfg, 0.0)
        assert rep.max_deviation == 0.0 and rep.gap == 0.0
        assert rep.passed

    def test_bound_holds_and_shrinks(self):
        reps = [trajectory_deviation_bound(self.x0, -5.0, 0.0, self.cfg, e) for e in (0.5, 0.25, 0.1)]
        assert all(r.passed for r in reps)
        devs = [r.max_deviation for r in reps]
        assert devs == sorted(devs, reverse=True)

    def test_log_log_slope(self):
        eps = np.array([0.4, 0.2, 0.1, 0.05])
        devs = [trajectory_deviation_bound(self.x0, -5.0, 0.0, self.cfg, e).deviation[-1] for e in eps]
        slope = np.polyfit(np.log(eps), np.log(devs), 1)[0]
        assert slope >= 1.0
        assert slope == pytest.approx(2.0, abs=0.2)


class TestSemicontinuity:
    cfg = ProcessConfig(PERIODIC, NonlinearitySpec.make("cubic", kappa=1.0), N=N, dt=0.01)

    def test_only_unperturbed(self):
        rep = semicontinuity_experiment(0.0, [0.0], self.cfg, m=10)
        assert len(rep.rows) == 1
        assert rep.rows[0].hausdorff_eps_to_0 == 0.0 and rep.rows[0].hausdorff_0_to_eps == 0.0

    def test_homogeneous_sections_collapse(self):
        cfg = ProcessConfig(PERIODIC, N=N, dt=0.01)
        rep = semicontinuity_experiment(0.0, [0.5, 0.1, 0.0], cfg, m=10, tol=1e-6)
        for r in rep.rows:
            assert r.hausdorff_eps_to_0 <= r.cloud_resolution + 1e-6

    def test_requires_zero(self):
        with pytest.raises(InvalidArgumentError):
            semicontinuity_experiment(0.0, [0.5], self.cfg, m=4)

    def test_reproducible(self):
        a = semicontinuity_experiment(0.0, [0.25, 0.0], self.cfg, m=12, seed=3)
        b = semicontinuity_experiment(0.0, [0.25, 0.0], self.cfg, m=12, seed=3)
        assert [r.as_dict() for r in a.rows] == [r.as_dict() for r in b.rows]
