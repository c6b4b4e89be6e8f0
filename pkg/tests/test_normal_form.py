"""Tests for the resolvent profiles and the reduced modulus system."""

import math

import numpy as np
import pytest

from app.services.classifier import ODE_GROWTH_BAND, CaseLabel, ClassifierParams, TrajectorySeries, classify
from app.services.normal_form import (
    compute_profiles,
    integrate_radial_nf,
    pin_mu,
    predict_relaxation,
    xi2,
    xi3,
)


def test_invariant_conserved_without_forcing():
    """2 mu^2 + nu^2 stays constant to integrator tolerance."""
    series = integrate_radial_nf(0.1, 0.3, 1.0, 1e4)
    assert series.invariant_drift < 1e-8
    assert not series.clipped
    assert np.all(np.diff(series.mu) >= 0)
    assert np.all(np.diff(series.nu) <= 0)


def test_pinned_mu_matches_closed_form():
    """With mu frozen, nu^-2 grows linearly at rate 4 gamma0 mu0^2."""
    mu0, nu0, gamma0 = 0.2, 0.3, 2.0
    t = np.linspace(0.0, 5e3, 201)
    series = integrate_radial_nf(mu0, nu0, gamma0, t[-1], forcing=pin_mu(gamma0), t_eval=t)
    np.testing.assert_allclose(series.mu, mu0, rtol=1e-10)
    expected = (nu0**-2 + 4.0 * gamma0 * mu0**2 * t) ** -0.5
    np.testing.assert_allclose(series.nu, expected, rtol=1e-8)


def test_late_decay_of_nu_is_inverse_square_root():
    """log |nu| against log t has slope -1/2 far past the crossover."""
    t = np.geomspace(1e6, 1e8, 41)
    series = integrate_radial_nf(0.1, 0.1, 1.0, 1e8, t_eval=np.concatenate(([0.0], t)))
    slope = np.polyfit(np.log(series.t[1:]), np.log(series.nu[1:]), 1)[0]
    assert abs(slope + 0.5) <= 0.02


def test_amplitude_scaling():
    """(s mu0, s nu0) at time t / s^4 is s times the original solution."""
    s = 2.0
    t = np.linspace(0.0, 2e4, 101)
    base = integrate_radial_nf(0.1, 0.2, 1.0, t[-1], t_eval=t)
    scaled = integrate_radial_nf(s * 0.1, s * 0.2, 1.0, t[-1] / s**4, t_eval=t / s**4)
    np.testing.assert_allclose(scaled.mu, s * base.mu, rtol=1e-7)
    np.testing.assert_allclose(scaled.nu, s * base.nu, rtol=1e-7)


def test_envelopes_bound_nu():
    """The predicted envelopes contain |nu| at every sample."""
    mu0, nu0, gamma0 = 0.05, 0.2, 1.0
    t = np.linspace(0.0, 1e6, 401)
    series = integrate_radial_nf(mu0, nu0, gamma0, t[-1], t_eval=t)
    prediction = predict_relaxation(mu0, nu0, gamma0)
    assert np.all(series.nu >= prediction.lower(series.t) * (1 - 1e-8))
    assert np.all(series.nu <= prediction.upper(series.t) * (1 + 1e-8))
    assert prediction.mu_inf == pytest.approx(math.sqrt(mu0**2 + 0.5 * nu0**2))
    assert series.mu[-1] <= prediction.mu_inf * (1 + 1e-8)


def test_prediction_times():
    """Crossover and e-folding times follow the amplitudes."""
    prediction = predict_relaxation(0.1, 0.2, 0.5)
    mu_inf2 = 0.1**2 + 0.5 * 0.2**2
    assert prediction.crossover_time == pytest.approx(1.0 / (4 * 0.5 * mu_inf2 * 0.04))
    assert prediction.efold_time == pytest.approx(1.0 / (0.5 * 0.2**4))
    assert prediction.asymptotic_coefficient == pytest.approx((4 * 0.5 * mu_inf2) ** -0.5)


def test_zero_gamma_freezes_the_system():
    """gamma0 = 0 gives constant moduli and infinite characteristic times."""
    series = integrate_radial_nf(0.1, 0.2, 0.0, 100.0)
    np.testing.assert_allclose(series.mu, 0.1)
    np.testing.assert_allclose(series.nu, 0.2)
    assert predict_relaxation(0.1, 0.2, 0.0).crossover_time == math.inf


def test_zero_horizon_returns_initial_state():
    series = integrate_radial_nf(0.1, 0.2, 1.0, 0.0)
    assert series.t.tolist() == [0.0]
    assert series.mu.tolist() == [0.1]


@pytest.mark.parametrize("args", [(-0.1, 0.2, 1.0), (0.1, -0.2, 1.0), (0.1, 0.2, -1.0)])
def test_negative_inputs_rejected(args):
    with pytest.raises(ValueError):
        integrate_radial_nf(*args, 10.0)


def test_prediction_needs_positive_amplitudes():
    with pytest.raises(ValueError):
        predict_relaxation(0.0, 0.2, 1.0)


def test_forcing_through_zero_is_clipped():
    """A forcing that drives nu below zero clips it and flags the series."""
    series = integrate_radial_nf(0.1, 0.05, 1.0, 1.0, forcing=lambda t, mu, nu: (0.0, -1.0))
    assert series.clipped
    assert np.all(series.nu >= 0)


def test_real_profiles_solve_their_equations(profiles):
    """Phi2..Phi5 satisfy their resolvent equations and are real."""
    assert max(profiles.residuals.values()) <= 1e-8
    for phi in (profiles.phi2, profiles.phi3, profiles.phi4, profiles.phi5):
        assert np.isrealobj(phi)


def test_resonant_profile_pairing_gives_gamma0(spectrum, profiles, resonance):
    """Im <phi0 phi1^2, Phi1> = -lam gamma0."""
    source = spectrum.phi0 * spectrum.phi1**2
    pairing = float(np.imag(spectrum.grid.inner(source, profiles.phi1)))
    assert pairing == pytest.approx(-profiles.lam * resonance.gamma0_lorentzian, rel=1e-6)
    assert len(profiles.phi1_sigmas) == 4


def test_profiles_vanish_without_nonlinearity(spectrum):
    """lam = 0 has no dispersive forcing."""
    zero = compute_profiles(spectrum, 0, extension=2)
    for phi in (zero.phi1, zero.phi2, zero.phi3, zero.phi4, zero.phi5):
        assert not np.any(phi)


def test_scaled_profiles(profiles):
    """Every profile is linear in lam."""
    flipped = profiles.scaled(-1.0)
    assert flipped.lam == -profiles.lam
    np.testing.assert_array_equal(flipped.phi3, -profiles.phi3)


def test_xi2_is_cubic_and_phase_covariant(profiles):
    """xi2(s x, s y) = s^3 xi2(x, y) and a common phase passes through."""
    x, y = 0.02 + 0.01j, -0.03 + 0.04j
    base = xi2(x, y, profiles)
    np.testing.assert_allclose(xi2(2 * x, 2 * y, profiles), 8 * base, rtol=1e-12, atol=1e-18)
    rotation = np.exp(0.9j)
    np.testing.assert_allclose(xi2(rotation * x, rotation * y, profiles), rotation * base, rtol=1e-12, atol=1e-18)


def test_xi3_is_the_remainder(profiles):
    x, y = 0.01, 0.02j
    xi = xi2(x, y, profiles) + 1e-9
    np.testing.assert_allclose(xi3(xi, x, y, profiles), 1e-9, rtol=1e-6)


def test_modulus_run_classifies_with_ode_growth_rate():
    """|mu| read as |x| and |nu| as |y|: II_b with rate gamma0 n^4 inside [3/4, 5/4]."""
    gamma0, nu0 = 1.0, 0.2
    t = np.linspace(0.0, 1e4, 2001)
    series = integrate_radial_nf(1e-6, nu0, gamma0, t[-1], t_eval=t)
    trajectory = TrajectorySeries(times=series.t, abs_x=series.mu, abs_y=series.nu, psi_l2loc=np.ones_like(series.t))
    report = classify(trajectory, ClassifierParams(alpha=1.0), gamma0=gamma0, growth_band=ODE_GROWTH_BAND)
    assert report.label == CaseLabel.GROUND_B
    assert report.thresholds.n == pytest.approx(nu0, rel=1e-6)
    assert report.growth.passed
    assert 0.75 <= report.growth.ratio <= 1.25
