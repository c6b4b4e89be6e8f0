"""
Tests for threshold detection and the case classification.

Every scenario is a synthetic |x|, |y|, ||psi||_{L2loc} series whose threshold
crossings can be worked out by hand on a unit-spaced time grid.
"""

from types import SimpleNamespace

import numpy as np
import pytest
from pydantic import ValidationError

from app.services.classifier import (
    ODE_GROWTH_BAND,
    CaseLabel,
    ClassifierParams,
    FitWindowError,
    GrowthWindowError,
    NonMonotoneTimeError,
    NonPositiveSeriesError,
    TooFewSamplesError,
    TrajectorySeries,
    bracket,
    classify,
    detect_thresholds,
    fit_decay_exponent,
    fit_growth_rate,
    fit_phase_drift,
)

TIMES = np.linspace(0.0, 1000.0, 1001)
UNIT_ALPHA = ClassifierParams(alpha=1.0)


def _series(ax, ay, l2loc=None, times=TIMES):
    ax = np.broadcast_to(np.asarray(ax, dtype=float), times.shape).copy()
    ay = np.broadcast_to(np.asarray(ay, dtype=float), times.shape).copy()
    if l2loc is None:
        l2loc = bracket(times) ** -1.5
    return TrajectorySeries(times=times, abs_x=ax, abs_y=ay, psi_l2loc=np.asarray(l2loc, dtype=float))


def _ground_b_series(times=TIMES):
    ay = np.where(times <= 600.0, 0.3, 0.3 * np.exp(-(times - 600.0) / 20.0))
    ax = np.minimum(1e-8 * np.exp(0.05 * times), 0.3)
    return _series(ax, ay, times=times)


GROUND_B_GAMMA0 = 0.05 / 0.3**4


def test_bracket():
    np.testing.assert_allclose(bracket([0.0, 1.0, -2.5]), [1.0, 2.0, 3.5])


@pytest.mark.parametrize("n", [0.05, 0.1, 0.3])
def test_t1_crosses_at_closed_form(n):
    """|y| = n constant: t1 is the last sample before (alpha/n^{2+delta})^{2/3} - 1."""
    thresholds = detect_thresholds(_series(1e-12, n), UNIT_ALPHA)
    crossing = (1.0 / n ** (2.0 + UNIT_ALPHA.delta)) ** (2.0 / 3.0) - 1.0
    stride = TIMES[1] - TIMES[0]
    assert crossing - stride <= thresholds.t1 <= crossing
    assert thresholds.n == n


def test_vacuum_case():
    """Small data below the envelope with a decaying local norm is case I."""
    series = _series(0.01 * bracket(TIMES) ** -0.6, 0.01 * bracket(TIMES) ** -0.6)
    report = classify(series, UNIT_ALPHA)
    assert report.label == CaseLabel.VACUUM
    assert report.thresholds.t1 is None
    assert report.decay.slope == pytest.approx(-1.5, abs=0.01)
    assert report.decay.window == (50.0, 1000.0)


def test_flat_local_norm_is_inconclusive():
    """t1 beyond horizon without local decay is not case I."""
    series = _series(0.01, 0.01, l2loc=np.ones_like(TIMES))
    report = classify(series, UNIT_ALPHA)
    assert report.label == CaseLabel.INCONCLUSIVE
    assert any("not decaying" in note for note in report.notes)


def test_too_few_samples_is_inconclusive():
    times = np.linspace(0.0, 10.0, 50)
    report = classify(_series(0.1, 0.1, times=times), UNIT_ALPHA)
    assert report.label == CaseLabel.INCONCLUSIVE
    assert report.thresholds is None
    with pytest.raises(TooFewSamplesError):
        detect_thresholds(_series(0.1, 0.1, times=times), UNIT_ALPHA)


def test_non_monotone_times_rejected():
    times = TIMES.copy()
    times[500] = times[499]
    with pytest.raises(NonMonotoneTimeError):
        detect_thresholds(_series(0.1, 0.1, times=times), UNIT_ALPHA)
    assert classify(_series(0.1, 0.1, times=times), UNIT_ALPHA).label == CaseLabel.INCONCLUSIVE


def test_ground_dominant_subcase_three():
    """|x| large and |y| below eps0 n at t1 is II_a with t2 = t3 = t4 = t1."""
    thresholds = detect_thresholds(_series(0.5, 0.001), UNIT_ALPHA)
    assert thresholds.t1 == 2.0
    assert thresholds.n == 0.5
    assert thresholds.subcase == 3
    assert thresholds.t2 == thresholds.t3 == thresholds.t4 == thresholds.t1
    assert classify(_series(0.5, 0.001), UNIT_ALPHA).label == CaseLabel.GROUND_A


def test_ground_dominant_subcase_two():
    """Both modes sizable at t1: t3 = t2 = t1 and t4 is searched."""
    thresholds = detect_thresholds(_series(0.5, 0.2), UNIT_ALPHA)
    assert thresholds.subcase == 2
    assert thresholds.t2 == thresholds.t3 == thresholds.t1
    assert thresholds.t4 is None


def test_ground_dominant_subcase_one():
    """|x| above |y|^{2+delta} but below the collapse fraction of n."""
    times = np.linspace(0.0, 10000.0, 1001)
    thresholds = detect_thresholds(_series(5e-6, 0.01, times=times), UNIT_ALPHA)
    assert thresholds.t1 is not None
    assert thresholds.subcase == 1
    assert thresholds.t2 == thresholds.t1
    assert thresholds.t3 is None


def test_excited_case():
    """A steady |y| with negligible |x| is case III."""
    report = classify(_series(1e-12, 0.3), UNIT_ALPHA)
    assert report.thresholds.t1 == 8.0
    assert report.thresholds.t2 is None
    assert report.label == CaseLabel.EXCITED
    assert report.y_variation == pytest.approx(0.0)


def test_wandering_y_without_t2_is_inconclusive():
    """t2 beyond horizon but |y| drifting by more than 1/8."""
    ay = 0.3 * (1.0 + 0.5 * TIMES / TIMES[-1])
    report = classify(_series(1e-12, ay), UNIT_ALPHA)
    assert report.label == CaseLabel.INCONCLUSIVE
    assert any("not stabilized" in note for note in report.notes)


def test_excited_plateau_then_collapse():
    """Exponential |x| growth out of a |y| plateau is II_b."""
    series = _ground_b_series()
    report = classify(series, UNIT_ALPHA, gamma0=GROUND_B_GAMMA0)
    thresholds = report.thresholds
    assert report.label == CaseLabel.GROUND_B
    assert thresholds.t1 == 8.0
    assert 245.0 <= thresholds.t2 <= 260.0
    assert thresholds.t3 == thresholds.t2
    assert thresholds.t4 == 674.0
    assert report.plateau_collapse is True
    assert report.growth is not None
    assert report.growth.rate == pytest.approx(0.05, rel=1e-6)
    assert report.growth.passed
    assert report.relaxation_constant > 0
    assert any("late |y| fit" in note for note in report.notes)


def test_growth_check_uses_requested_band():
    """A rate outside the band fails the growth check."""
    series = _ground_b_series()
    report = classify(series, UNIT_ALPHA, gamma0=3.0 * GROUND_B_GAMMA0, growth_band=ODE_GROWTH_BAND)
    assert report.label == CaseLabel.GROUND_B
    assert not report.growth.passed
    assert report.growth.band == ODE_GROWTH_BAND


def test_classification_robust_to_sampling():
    """Every other sample gives the same case and nearby thresholds."""
    dense = classify(_ground_b_series(), UNIT_ALPHA, gamma0=GROUND_B_GAMMA0)
    sparse = classify(_ground_b_series(TIMES[::2]), UNIT_ALPHA, gamma0=GROUND_B_GAMMA0)
    assert sparse.label == dense.label
    for name in ("t1", "t2", "t3", "t4"):
        assert abs(getattr(sparse.thresholds, name) - getattr(dense.thresholds, name)) <= 2.0


def test_default_alpha_from_initial_sample():
    """Without an explicit alpha, |x0| + |y0| + ||xi0|| is used."""
    series = TrajectorySeries(
        times=TIMES,
        abs_x=np.full(TIMES.size, 0.1),
        abs_y=np.full(TIMES.size, 0.2),
        psi_l2loc=np.ones(TIMES.size),
        xi_l2=np.full(TIMES.size, 0.05),
    )
    assert detect_thresholds(series, ClassifierParams()).alpha == pytest.approx(0.35)


def test_series_from_record():
    record = SimpleNamespace(
        times=[0.0, 1.0],
        abs_x=[0.1, 0.2],
        abs_y=[0.3, 0.3],
        psi_l2loc=[1.0, 0.5],
        rows=[{"xi_l2": 0.01}, {"xi_l2": 0.02}],
    )
    series = TrajectorySeries.from_record(record)
    assert series.horizon == 1.0
    np.testing.assert_array_equal(series.xi_l2, [0.01, 0.02])


def test_decay_fit_recovers_power_law():
    t = np.geomspace(1.0, 1000.0, 60)
    fit = fit_decay_exponent(t, 3.0 * t**-1.2, (1.0, 1000.0))
    assert fit.slope == pytest.approx(-1.2, abs=1e-10)
    assert fit.ci_low <= fit.slope <= fit.ci_high
    assert fit.ci_high - fit.ci_low <= 1e-8


def test_decay_fit_bootstrap_is_reproducible():
    """The bootstrap draws from a seeded PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(5))
    t = np.geomspace(1.0, 1000.0, 60)
    values = t**-0.8 * np.exp(0.05 * rng.normal(size=t.size))
    first = fit_decay_exponent(t, values, seed=3)
    second = fit_decay_exponent(t, values, seed=3)
    assert (first.ci_low, first.ci_high) == (second.ci_low, second.ci_high)
    assert first.ci_low < first.slope < first.ci_high


@pytest.mark.parametrize(
    "window,error",
    [((1.0, 1.5), FitWindowError), ((2.0, 15.0), FitWindowError), ((5000.0, 6000.0), FitWindowError)],
)
def test_decay_fit_window_errors(window, error):
    t = np.linspace(1.0, 1000.0, 1000)
    with pytest.raises(error):
        fit_decay_exponent(t, t**-1.0, window)


def test_decay_fit_needs_positive_values():
    t = np.linspace(1.0, 1000.0, 1000)
    values = t**-1.0
    values[10] = 0.0
    with pytest.raises(NonPositiveSeriesError):
        fit_decay_exponent(t, values, (1.0, 1000.0))


def test_growth_fit_rate_and_ratio():
    t = np.linspace(0.0, 100.0, 101)
    fit = fit_growth_rate(t, 1e-6 * np.exp(0.02 * t), (0.0, 100.0), gamma0=0.32, n=0.5)
    assert fit.rate == pytest.approx(0.02)
    assert fit.ratio == pytest.approx(1.0)
    assert fit.passed


@pytest.mark.parametrize("bad", [0.0, 0.6])
def test_growth_fit_window_errors(bad):
    """|x| must stay positive and below n inside the window."""
    t = np.linspace(0.0, 100.0, 101)
    x = np.full(t.size, 1e-3)
    x[50] = bad
    with pytest.raises(GrowthWindowError):
        fit_growth_rate(t, x, (0.0, 100.0), gamma0=1.0, n=0.5)


@pytest.mark.parametrize(
    "overrides",
    [
        {"delta": 0.5},
        {"delta": 1.0},
        {"iota": 0.0},
        {"iota": 0.25},
        {"delta": 0.9, "iota": 0.15},
        {"sampling_tolerance": -1e-9},
        {"r1": 3.0},
        {"alpha": -1.0},
        {"epsilon": 1.5},
        {"unknown": 1},
    ],
)
def test_invalid_params_rejected(overrides):
    with pytest.raises(ValidationError):
        ClassifierParams(**overrides)


def test_epsilon0_is_four_epsilon():
    assert ClassifierParams(epsilon=0.02).epsilon0 == pytest.approx(0.08)


def test_plateau_break_before_t2_is_not_ground_b():
    """t2 is reached but |y| left its plateau first: no II_b label."""
    base = _ground_b_series()
    ay = np.where(TIMES < 100.0, 0.3, 0.2)
    series = _series(base.abs_x, ay)
    report = classify(series, UNIT_ALPHA, gamma0=GROUND_B_GAMMA0)
    assert report.thresholds.t2 is not None
    assert report.plateau_collapse is False
    assert report.label == CaseLabel.INCONCLUSIVE
    assert any("plateau-collapse" in note for note in report.notes)


@pytest.mark.parametrize("ratio,label", [(0.1, CaseLabel.GROUND_B), (0.9, CaseLabel.INCONCLUSIVE)])
def test_ground_b_needs_xi2_dominance(ratio, label):
    """The recorded ||xi - xi2|| / ||xi2|| on the plateau gates II_b."""
    base = _ground_b_series()
    series = TrajectorySeries(
        times=base.times,
        abs_x=base.abs_x,
        abs_y=base.abs_y,
        psi_l2loc=base.psi_l2loc,
        xi3_ratio=np.full(TIMES.size, ratio),
    )
    report = classify(series, UNIT_ALPHA, gamma0=GROUND_B_GAMMA0)
    assert report.plateau_collapse is True
    assert report.plateau_xi3_ratio == pytest.approx(ratio)
    assert report.label == label


def test_xi3_ratio_read_from_record_rows():
    record = SimpleNamespace(
        times=[0.0, 1.0],
        abs_x=[0.1, 0.2],
        abs_y=[0.3, 0.3],
        psi_l2loc=[1.0, 0.5],
        rows=[{"xi_l2": 0.01, "xi3_ratio": 1.0}, {"xi_l2": 0.02, "xi3_ratio": 0.2}],
    )
    np.testing.assert_array_equal(TrajectorySeries.from_record(record).xi3_ratio, [1.0, 0.2])


def test_phase_drift_recovers_log_growth():
    """phase = -E t + 0.3 log t gives omega slope 0.3 against log t."""
    t = np.linspace(1.0, 1000.0, 2000)
    fit = fit_phase_drift(t, -0.7 * t + 0.3 * np.log(t), 0.7, (10.0, 1000.0))
    assert fit.log_slope == pytest.approx(0.3, rel=1e-9)
    assert fit.log_r2 == pytest.approx(1.0)
    assert fit.sqrt_r2 < 1.0
    np.testing.assert_allclose(fit.omega, 0.3 * np.log(t), atol=1e-9)


def test_phase_drift_window_error():
    t = np.linspace(1.0, 10.0, 10)
    with pytest.raises(FitWindowError):
        fit_phase_drift(t, np.zeros_like(t), 1.0, (20.0, 30.0))
