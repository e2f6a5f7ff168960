"""The heteroclinic building block and its closed-form calculus."""
import numpy as np
import pytest
from scipy.integrate import quad

from kinklab import (
    InvalidArgumentError,
    Potential,
    QUARTIC,
    chi_constant,
    rescaled_profile,
    u_het,
    u_het_deriv,
)

SQRT2 = np.sqrt(2.0)
CHI_EXACT = 2.0 * SQRT2 / 3.0


def make_custom_quartic():
    """The quartic well wrapped as a 'custom' potential: exercises the shooting path."""
    return Potential(
        kind="custom",
        f=lambda u: (u * u - 1.0) * u,
        f_prime=lambda u: 3.0 * u * u - 1.0,
        F=lambda u: 0.25 * (1.0 - u * u) ** 2,
        lambda0=1.5,
    )


class TestHeteroclinic:
    def test_boundary_condition_at_zero(self):
        assert u_het(0.0) == 0.0

    def test_closed_form_inversion(self):
        # U(sqrt2 * atanh(0.9)) = 0.9; the shooting integrator is the
        # independent oracle for the same level crossing
        x_star = SQRT2 * np.arctanh(0.9)
        assert abs(x_star - 2.08204) < 2e-5
        assert u_het(x_star) == pytest.approx(0.9, abs=1e-14)
        shot = make_custom_quartic()
        assert u_het(x_star, shot) == pytest.approx(0.9, abs=1e-9)

    def test_oddness(self):
        for x in (0.3, 1.7):
            assert u_het(-x) == -u_het(x)

    def test_strictly_increasing(self, rng):
        xs = np.sort(rng.uniform(-8, 8, 200))
        vals = u_het(xs)
        assert np.all(np.diff(vals) > 0)

    def test_shooting_matches_closed_form(self):
        shot = make_custom_quartic()
        xs = np.linspace(-6, 6, 41)
        assert np.max(np.abs(u_het(xs, shot) - u_het(xs))) < 1e-9


class TestDerivatives:
    def test_first_derivative_at_zero(self):
        # closed form (1/sqrt2) sech^2(0); central differences as oracle
        assert u_het_deriv(0.0, 1) == pytest.approx(1.0 / SQRT2, abs=1e-14)
        h = 1e-5
        for x in (0.0, 0.7, -1.3):
            fd = (u_het(x + h) - u_het(x - h)) / (2 * h)
            assert u_het_deriv(x, 1) == pytest.approx(fd, abs=1e-8)

    def test_second_derivative_at_zero(self):
        assert u_het_deriv(0.0, 2) == 0.0

    def test_exponential_decay(self):
        assert u_het_deriv(25.0, 1) < 1e-10

    def test_first_derivative_positive(self, rng):
        xs = rng.uniform(-20, 20, 100)
        assert np.all(u_het_deriv(xs, 1) > 0)

    def test_third_derivative_finite_difference(self):
        h = 1e-4
        for x in (0.4, -0.9):
            fd = (u_het_deriv(x + h, 2) - u_het_deriv(x - h, 2)) / (2 * h)
            assert u_het_deriv(x, 3) == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_unsupported_order_rejected(self):
        with pytest.raises(InvalidArgumentError):
            u_het_deriv(0.0, 4)

    def test_first_order_form(self, rng):
        # U'^2 - 2 F(U) = 0: the conserved quantity of the heteroclinic
        xs = rng.uniform(-10, 10, 200)
        resid = u_het_deriv(xs, 1) ** 2 - 2.0 * QUARTIC.F(u_het(xs))
        assert np.max(np.abs(resid)) < 1e-10

    def test_decay_rate_fit(self):
        # |1 - U(x)| ~ C exp(-c x) with c = sqrt2 for the quartic well
        xs = np.linspace(4.0, 12.0, 30)
        logs = np.log(1.0 - u_het(xs))
        c = -np.polyfit(xs, logs, 1)[0]
        assert c >= 1.3
        assert c == pytest.approx(SQRT2, rel=2e-3)


class TestRescaledProfile:
    def test_centered_zero(self):
        assert rescaled_profile(0.5, 0.5, +1, 0.02) == 0.0

    def test_rescaled_inversion(self):
        x = 0.5 + 0.02 * SQRT2 * np.arctanh(0.9)
        assert rescaled_profile(x, 0.5, +1, 0.02) == pytest.approx(0.9, abs=1e-12)

    def test_tail_saturation(self):
        delta = 1.0 - rescaled_profile(0.9, 0.5, +1, 0.02)
        assert 0 <= delta < 1e-10

    def test_ode_residual(self, rng):
        # eps^2 u_xx - f(u) with the closed-form second derivative
        eps, xi = 0.02, 0.4
        xs = rng.uniform(0, 1, 100)
        u = rescaled_profile(xs, xi, +1, eps)
        uxx = u_het_deriv((xs - xi) / eps, 2) / eps**2
        assert np.max(np.abs(eps**2 * uxx - QUARTIC.f(u))) < 1e-8

    def test_invalid_arguments(self):
        with pytest.raises(InvalidArgumentError):
            rescaled_profile(0.5, 0.5, +1, -0.02)
        with pytest.raises(InvalidArgumentError):
            rescaled_profile(0.5, 0.5, 2, 0.02)


class TestChiConstant:
    def test_closed_form_value(self):
        assert abs(chi_constant() - CHI_EXACT) < 1e-10

    def test_truncation_insensitive(self):
        # adaptive quadrature on (-40, 40) vs (-80, 80): exponential tail
        integrand = lambda y: u_het_deriv(y, 1) ** 2
        a, _ = quad(integrand, -40, 40, epsabs=1e-14, epsrel=1e-13, limit=200)
        b, _ = quad(integrand, -80, 80, epsabs=1e-14, epsrel=1e-13, limit=400)
        assert abs(a - b) < 1e-12

    def test_mirrored_potential_same_value(self):
        mirrored = Potential(
            kind="custom",
            f=lambda u: -((-u) ** 3 - (-u)),
            f_prime=lambda u: 3.0 * u * u - 1.0,
            F=lambda u: 0.25 * (1.0 - (-u) ** 2) ** 2,
            lambda0=1.5,
        )
        assert chi_constant(mirrored) == pytest.approx(chi_constant(), abs=1e-9)

    def test_cached(self):
        assert chi_constant() is not None
        assert chi_constant() == chi_constant()


class TestPotentialValidation:
    def test_rejects_non_double_well(self):
        with pytest.raises(InvalidArgumentError):
            Potential(kind="custom", f=lambda u: u, f_prime=lambda u: 1.0,
                      F=lambda u: 0.5 * u * u, lambda0=1.0)

    def test_rejects_bad_lambda0(self):
        with pytest.raises(InvalidArgumentError):
            Potential(kind="quartic", f=QUARTIC.f, f_prime=QUARTIC.f_prime,
                      F=QUARTIC.F, lambda0=-1.0)
