"""Energy functionals, constant selection and the decay certificates."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from platesim.coefficients import NonlinearitySpec
from platesim.energy import (
    W_values,
    absorbing_certificate,
    compute_cal_W,
    compute_W,
    compute_Z,
    estimate_c_bar,
    fit_envelope,
    homogeneous_decay_certificate,
    norms_squared,
    quadrature_error,
    quadrature_size,
    select_constants,
    semilinear_certificate,
)
from platesim.errors import DissipativityFailure, InfeasibleError, InvalidArgumentError
from platesim.evolution import ProcessConfig, Trajectory, constant_damping, evolve, evolve_batch
from platesim.pullback import sample_ball
from platesim.spectral import PhaseState, basis_field, build_grid, norm_X0, zero_field

E1 = basis_field(1, 1)
NEG_CUBIC = NonlinearitySpec("neg_cubic")

states = st.builds(
    lambda u, v, lam: PhaseState.from_flat(u, v, 6, lam),
    arrays(np.float64, 6, elements=st.floats(-5, 5)),
    arrays(np.float64, 6, elements=st.floats(-5, 5)),
    st.floats(0.05, 20.0),
)


class TestFunctionals:
    def test_W_example(self):
        assert compute_W(PhaseState(E1, E1, 1.0), 0.25) == pytest.approx(math.pi, rel=1e-14)

    def test_W_zero(self):
        assert compute_W(PhaseState.zero(4, 1.0), 0.1) == 0.0

    @given(arrays(np.float64, 5, elements=st.floats(-3, 3)), st.floats(1e-3, 0.25))
    def test_W_without_velocity(self, u, b):
        x = PhaseState.from_flat(u, np.zeros(5), 5, 2.0)
        assert compute_W(x, b) == pytest.approx(0.5 * norm_X0(x) ** 2, rel=1e-12, abs=1e-14)

    def test_cal_W_equals_W_without_nonlinearity(self):
        x = PhaseState.from_flat([0.3, -0.1, 0.2], [1.0, 0.0, -0.5], 3, 1.0)
        assert compute_cal_W(x, 0.2, NonlinearitySpec("zero")) == compute_W(x, 0.2)

    def test_cal_W_example(self):
        x = PhaseState(E1, zero_field(1), 1.0)
        # int sin^4 = 3 pi / 8, so -int F(u) = 3 pi / 32
        expected = math.pi / 2 + 3 * math.pi / 32
        assert expected == pytest.approx(1.86532, abs=1e-5)
        assert compute_cal_W(x, 0.25, NEG_CUBIC) == pytest.approx(expected, rel=1e-14)

    @given(states, st.floats(1e-3, 0.25))
    def test_cal_W_dominates_W_for_dissipative_cubic(self, x, b):
        assert compute_cal_W(x, b, NEG_CUBIC) >= compute_W(x, b) - 1e-12 * (1 + abs(compute_W(x, b)))

    def test_default_quadrature_is_exact(self):
        rng = np.random.default_rng(2)
        x = PhaseState.from_flat(rng.standard_normal(7), np.zeros(7), 7, 1.0)
        # F has degree 4, so 2 (M + 1) > 4 N is needed
        grid = build_grid(quadrature_size(NEG_CUBIC, 7))
        assert grid.M == 15
        assert quadrature_error(x, NEG_CUBIC, grid) < 1e-12
        assert quadrature_error(x, NEG_CUBIC, build_grid(11)) > 1e-3

    def test_Z_values(self):
        assert compute_Z(PhaseState.zero(3, 1.0)) == 0.0
        assert compute_Z(PhaseState(E1, zero_field(1), 1.0)) == pytest.approx(math.pi / 2)

    @given(states)
    def test_Z_is_half_norm_squared(self, x):
        assert compute_Z(x) == pytest.approx(0.5 * norm_X0(x) ** 2, rel=1e-12, abs=1e-300)

    @settings(max_examples=50)
    @given(states, st.sampled_from([0.05, 0.1, 0.25]))
    def test_sandwich(self, x, b):
        n2 = norm_X0(x) ** 2
        W = compute_W(x, b)
        assert W - 0.25 * n2 >= -1e-12 * max(n2, 1.0)
        assert 0.75 * n2 - W >= -1e-12 * max(n2, 1.0)

    @given(states, st.floats(-4, 4))
    def test_W_quadratic_scaling(self, x, alpha):
        assert compute_W(alpha * x, 0.1) == pytest.approx(alpha**2 * compute_W(x, 0.1), rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("b", [0.0, -0.1, 0.3])
    def test_b_range(self, b):
        with pytest.raises(InvalidArgumentError):
            compute_W(PhaseState.zero(2, 1.0), b)

    def test_batched_norms_match_single(self):
        rng = np.random.default_rng(3)
        U, V = rng.standard_normal((2, 4, 6))
        nu2, nv2, _ = norms_squared(U, V, 6, 1.5)
        for j in range(4):
            x = PhaseState.from_flat(U[j], V[j], 6, 1.5)
            assert nu2[j] + nv2[j] == pytest.approx(norm_X0(x) ** 2, rel=1e-13)


class TestConstants:
    def test_reference_selection(self):
        c = select_constants(1.0, 1.0, 1.0, 0.25, safety=0.5)
        assert c.eta == pytest.approx(0.5)
        assert c.b_sup == pytest.approx(0.2)
        assert c.b == pytest.approx(0.1)
        assert c.omega == pytest.approx(0.1)

    def test_homogeneous_branch(self):
        c = select_constants(1.0, 1.0, 1.0, 0.25, safety=0.5)
        # alpha0 - 3 b lam^{1/2} - b alpha1^2 / lam^{1/2} = 0.6, capped by b lam^{1/2}
        assert c.delta == pytest.approx(0.1)
        assert c.homogeneous_rate == pytest.approx(0.4 / 3)

    def test_semilinear_rates(self):
        c = select_constants(1.0, 1.0, 1.0, 0.25, r=1.0, c_bar=1.0, rho=3.0)
        assert c.d == pytest.approx(0.5)
        assert c.omega_bar == pytest.approx(0.025)

    @given(st.floats(0.01, 5.0), st.floats(0.0, 5.0), st.floats(0.05, 10.0), st.floats(0.01, 0.99))
    def test_rates_always_positive(self, alpha0, extra, lam, frac):
        c = select_constants(alpha0, alpha0 + extra, lam, frac * lam / 2)
        assert 0 < c.b <= 0.25
        assert c.omega > 0 and c.delta > 0 and c.omega_bar > 0

    def test_range_problems_collected(self):
        with pytest.raises(InvalidArgumentError) as info:
            select_constants(1.0, 0.5, 1.0, 0.9, safety=2.0)
        msg = str(info.value)
        assert "safety" in msg and "alpha0" in msg and "nu" in msg

    def test_nonpositive_alpha0(self):
        with pytest.raises(InfeasibleError):
            select_constants(0.0, 1.0, 1.0, 0.25)

    def test_c_bar_at_least_one(self):
        assert estimate_c_bar(NonlinearitySpec("zero"), 1.0, 8, 1.0) == 1.0
        assert estimate_c_bar(NonlinearitySpec.make("cubic", kappa=1.0), 1.0, 8, 1.0) >= 1.0


class TestDecayCertificate:
    consts = select_constants(1.0, 1.0, 1.0, 0.25)

    def test_zero_trajectory(self):
        tr = evolve(PhaseState.zero(4, 1.0), 0.0, 1.0, ProcessConfig(constant_damping(), N=4))
        rep = homogeneous_decay_certificate(tr, self.consts)
        assert rep.max_ratio == 0.0 and rep.passed

    def test_random_unit_ball(self):
        cfg = ProcessConfig(constant_damping(1.0), N=16, dt=0.01)
        cloud = sample_ball(1.0, 20, 11, 16, 1.0)
        bt = evolve_batch(cloud.U, cloud.V, 0.0, 10.0, cfg, record_every=5)
        rep = homogeneous_decay_certificate(bt, self.consts, dt=cfg.dt)
        assert rep.passed
        # the certified rate is conservative: three times it still holds
        assert homogeneous_decay_certificate(bt, self.consts, rate=3 * rep.rate, dt=cfg.dt).passed

    def test_doubled_rate_fails_on_slow_mode(self):
        # a = 5, lam = 1, k = 1: u'' + 6 u' + 2 u = 0 has the slow root -3 + sqrt(7)
        r = -3.0 + math.sqrt(7.0)
        cfg = ProcessConfig(constant_damping(5.0), N=1, dt=1e-3)
        x0 = PhaseState.from_flat([1.0], [r], 1, 1.0)
        tr = evolve(x0, 0.0, 10.0, cfg, record_every=100)
        sharp = dataclasses.replace(self.consts, delta=0.75 * (-2 * r))
        assert homogeneous_decay_certificate(tr, sharp, tol=1e-4).passed
        doubled = dataclasses.replace(sharp, delta=2 * sharp.delta)
        rep = homogeneous_decay_certificate(tr, doubled, tol=1e-4)
        assert not rep.passed
        assert rep.argmax_time == pytest.approx(10.0)


class TestSemilinearCertificate:
    def test_cubic_trajectory(self):
        f = NonlinearitySpec.make("cubic", kappa=1.0)
        cfg = ProcessConfig(constant_damping(1.0), f, N=8, dt=0.01)
        consts = select_constants(1.0, 1.0, 1.0, 0.25, r=1.0, c_bar=estimate_c_bar(f, 1.0, 8, 1.0),
                                  C_nu=0.75 * math.pi / 4)
        cloud = sample_ball(0.8, 6, 2, 8, 1.0)
        bt = evolve_batch(cloud.U, cloud.V, 0.0, 5.0, cfg, record_every=1)
        rep = semilinear_certificate(bt, consts, cfg)
        assert rep.checked_steps > 0
        assert rep.passed


def _batch(R, f, m=8, T=30.0, kappa_seed=1):
    cfg = ProcessConfig(constant_damping(1.0), f, N=16, dt=0.01)
    c = sample_ball(R, m, kappa_seed, 16, 1.0)
    return evolve_batch(c.U, c.V, 0.0, T, cfg, record_every=10)


class TestAbsorbing:
    consts = select_constants(1.0, 1.0, 1.0, 0.25)

    def test_pure_decay_has_zero_plateau(self):
        zero = NonlinearitySpec("zero")
        rep = absorbing_certificate({2.0: [_batch(2.0, zero)], 5.0: [_batch(5.0, zero)]}, self.consts)
        assert rep.K1 == rep.zero_level
        assert rep.K1_ratio == 1.0
        assert rep.passed

    def test_nontrivial_plateau_is_common(self):
        f = NonlinearitySpec.make("cubic", kappa=5.0)
        rep = absorbing_certificate({2.0: [_batch(2.0, f)], 5.0: [_batch(5.0, f)]}, self.consts)
        # both radii settle on the same nonzero steady state
        assert rep.K1 == pytest.approx(12.795, abs=1e-3)
        assert rep.K1_ratio < 1.0 + 1e-9
        assert rep.entered_and_stayed and rep.passed

    def test_zero_state_stays_zero(self):
        f = NonlinearitySpec.make("cubic", kappa=5.0)
        tr = _batch(0.0, f, m=1)
        assert not np.any(tr.U)

    def test_growing_envelope_raises(self):
        t = np.linspace(0.0, 10.0, 101)
        U = np.exp(0.3 * t)[:, None] * np.ones((1, 2))
        tr = Trajectory(t, U, np.zeros_like(U), 2, 1, 1.0)
        with pytest.raises(DissipativityFailure):
            fit_envelope([tr], 1.0, 0.025)

    def test_mismatched_sampling(self):
        a = Trajectory(np.array([0.0, 1.0]), np.ones((2, 2)), np.zeros((2, 2)), 2, 1, 1.0)
        b = Trajectory(np.array([0.0, 2.0]), np.ones((2, 2)), np.zeros((2, 2)), 2, 1, 1.0)
        with pytest.raises(InvalidArgumentError):
            fit_envelope([a, b], 1.0, 0.025)

    def test_W_values_vectorised(self):
        U = np.ones((3, 2))
        assert W_values(U, U, 0.1, 2, 1.0).shape == (3,)
