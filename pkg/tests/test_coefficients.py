"""Damping and nonlinearity catalogs and their validators."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from platesim.coefficients import (
    NONLINEARITY_KEYS,
    PROFILE_KEYS,
    DampingSpec,
    NonlinearitySpec,
    Profile,
    damping_gap,
    eval_damping,
    eval_F,
    eval_f,
    fit_dissipativity,
    nemitskii,
    validate_damping,
    verify_growth,
)
from platesim.errors import (
    AliasingError,
    DissipativityViolation,
    InvalidArgumentError,
    NumericOverflowError,
    UnknownCatalogEntry,
)
from platesim.spectral import ModalField, basis_field, build_grid, zero_field


def two_plus_sin_t(eps=0.0, **kw):
    base = Profile.make("sin_t", c0=2.0, c1=1.0, omega=1.0)
    return DampingSpec(base, Profile.make("sin_x", c=1.0), eps, alpha0=1.0, alpha1=4.0, **kw)


class TestProfiles:
    def test_catalog_keys(self):
        assert {"zero", "constant", "sin_t", "sin_t_sin_x", "sin_x"} <= set(PROFILE_KEYS)
        assert {"zero", "cubic", "neg_cubic", "sine"} <= set(NONLINEARITY_KEYS)

    def test_unknown_profile(self):
        with pytest.raises(UnknownCatalogEntry):
            Profile("wobble")

    def test_unknown_parameter(self):
        with pytest.raises(InvalidArgumentError):
            Profile.make("constant", c7=1.0)

    def test_constant_everywhere(self):
        spec = DampingSpec(Profile.make("constant", c0=1.0))
        g = build_grid(5)
        for t in (-3.0, 0.0, 7.5):
            assert np.all(eval_damping(spec, t, g) == 1.0)

    def test_perturbed_value_at_midpoint(self):
        g = build_grid(1)
        assert eval_damping(two_plus_sin_t(0.1), 0.0, g)[0] == pytest.approx(2.1)

    def test_eps_zero_reproduces_base(self):
        g = build_grid(9)
        a = two_plus_sin_t(0.0)
        base_only = DampingSpec(a.base, alpha0=1.0, alpha1=4.0)
        for t in np.linspace(-5, 5, 11):
            assert np.array_equal(eval_damping(a, t, g), eval_damping(base_only, t, g))

    @pytest.mark.parametrize("eps", [-0.1, 1.5])
    def test_epsilon_range(self, eps):
        with pytest.raises(InvalidArgumentError):
            two_plus_sin_t(eps)

    def test_alpha_order(self):
        with pytest.raises(InvalidArgumentError):
            DampingSpec(Profile("constant"), alpha0=2.0, alpha1=1.0)


class TestValidateDamping:
    def test_constant_has_zero_quotient(self):
        spec = DampingSpec(Profile.make("constant", c0=1.0), holder_C=0.0)
        rep = validate_damping(spec)
        assert rep.holder_quotient == 0.0
        assert rep.passed

    def test_sin_t_lipschitz(self):
        rep = validate_damping(two_plus_sin_t(beta=1.0, holder_C=1.0))
        assert rep.holder_quotient <= 1.0
        assert rep.passed

    def test_misdeclared_lower_bound(self):
        spec = DampingSpec(Profile.make("constant", c0=1.0), alpha0=3.0, alpha1=3.0)
        rep = validate_damping(spec)
        assert not rep.passed
        assert rep.measured_min == 1.0
        t, x = rep.min_witness
        assert -10 <= t <= 10 and 0 < x[0] < np.pi

    def test_too_small_holder_constant(self):
        rep = validate_damping(two_plus_sin_t(beta=1.0, holder_C=0.5))
        assert rep.holder_ok is False
        t1, t2 = rep.holder_witness
        assert t1 != t2

    def test_gap_is_eps_times_perturbation(self):
        g = build_grid(15)
        # sup of 0.2 sin x over interior nodes is attained at x = pi/2
        assert damping_gap(two_plus_sin_t(0.2), g) == pytest.approx(0.2)
        assert damping_gap(two_plus_sin_t(0.0), g) == 0.0


class TestNonlinearity:
    def test_values(self):
        f = NonlinearitySpec("neg_cubic")
        assert eval_f(f, 2.0) == -8.0
        assert eval_F(f, 1.0) == pytest.approx(-0.25)

    def test_zero(self):
        assert not np.any(eval_f(NonlinearitySpec("zero"), np.linspace(-3, 3, 7)))

    def test_overflow(self):
        with pytest.raises(NumericOverflowError):
            eval_f(NonlinearitySpec("neg_cubic"), np.array([1e200]))

    def test_unknown_key(self):
        with pytest.raises(UnknownCatalogEntry):
            NonlinearitySpec("quintic")

    @pytest.mark.parametrize("key", NONLINEARITY_KEYS)
    def test_primitive_matches(self, key):
        assert NonlinearitySpec(key).check_primitive() < 1e-6

    @given(st.floats(-20, 20))
    def test_cubic_closed_form(self, s):
        f = NonlinearitySpec.make("cubic", kappa=2.0)
        assert float(f.f(s)) == pytest.approx(2 * s - s**3, rel=1e-12, abs=1e-9)
        assert float(f.F(s)) == pytest.approx(s**2 - s**4 / 4, rel=1e-12, abs=1e-9)


class TestNemitskii:
    def test_zero(self):
        u = ModalField([0.3, -1.0, 2.0])
        assert nemitskii(NonlinearitySpec("zero"), u, build_grid(3)) == zero_field(3)

    def test_identity(self):
        out = nemitskii(NonlinearitySpec.make("linear", kappa=1.0, rho=5.0), basis_field(1, 4), build_grid(8))
        assert np.allclose(out.coeffs, [1, 0, 0, 0], atol=1e-14)

    def test_cube_of_sine(self):
        # sin^3 x = (3 sin x - sin 3x) / 4
        out = nemitskii(NonlinearitySpec("neg_cubic"), basis_field(1, 4), build_grid(12))
        assert np.allclose(out.coeffs, [-0.75, 0, 0.25, 0], atol=1e-14)

    def test_aliasing_guard(self):
        with pytest.raises(AliasingError):
            nemitskii(NonlinearitySpec("neg_cubic"), basis_field(1, 4), build_grid(8))

    def test_cube_exact_on_dealiased_grid(self):
        # projection of u^3 computed on a grid three times finer agrees
        rng = np.random.default_rng(0)
        u = ModalField(rng.standard_normal(5))
        f = NonlinearitySpec("neg_cubic")
        a = nemitskii(f, u, build_grid(15))
        b = nemitskii(f, u, build_grid(61))
        assert np.allclose(a.coeffs, b.coeffs, atol=1e-12)


class TestDissipativity:
    def test_quartic_maximum(self):
        cert = fit_dissipativity(NonlinearitySpec.make("cubic", kappa=1.0), nu=0.0, S=10.0, omega_measure=math.pi)
        assert cert.M_nu == pytest.approx(0.25, abs=1e-12)
        assert cert.C_nu == pytest.approx(math.pi / 4, abs=1e-6)
        assert abs(cert.argmax) == pytest.approx(math.sqrt(0.5), abs=1e-6)

    def test_zero(self):
        cert = fit_dissipativity(NonlinearitySpec("zero"), nu=0.0)
        assert cert.M_nu == 0.0 and cert.C_nu == 0.0

    def test_boundary_flag(self):
        cert = fit_dissipativity(NonlinearitySpec("square"), nu=0.1, S=10.0, strict=False)
        assert cert.boundary_attained

    def test_boundary_raises_when_strict(self):
        with pytest.raises(DissipativityViolation):
            fit_dissipativity(NonlinearitySpec("square"), nu=0.1, S=10.0)

    @given(st.floats(0.0, 0.45))
    def test_bound_holds_on_probe_range(self, nu):
        f = NonlinearitySpec.make("cubic", kappa=1.0)
        cert = fit_dissipativity(f, nu)
        s = np.linspace(-10, 10, 4001)
        assert np.all(f.f(s) * s - nu * s**2 <= cert.M_nu + 1e-12)

    def test_negative_nu(self):
        with pytest.raises(InvalidArgumentError):
            fit_dissipativity(NonlinearitySpec("neg_cubic"), nu=-1.0)


class TestGrowth:
    def test_cubic_passes(self):
        assert verify_growth(NonlinearitySpec.make("neg_cubic", rho=3.0, c=3.0)).passed

    def test_sine_passes(self):
        assert verify_growth(NonlinearitySpec.make("sine", rho=2.0, c=1.0, amp=1.0)).passed

    def test_cubic_with_low_exponent_fails(self):
        rep = verify_growth(NonlinearitySpec.make("neg_cubic", rho=2.0, c=3.0), S=10.0)
        assert not rep.passed
        # 3 s^2 / (3 (1 + |s|)) is largest at the edge of the probe range
        assert abs(rep.derivative_witness) == pytest.approx(10.0)
        assert rep.derivative_ratio == pytest.approx(100 / 11)
