"""
Threshold times t1..t4 and the vacuum / ground / excited classification.

Every threshold is a supremum over a finite sampled horizon. A threshold
whose defining condition never fails is reported as None ("beyond horizon"),
never as infinity.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.stats import linregress

from app.errors import LabError
from app.validators import is_open_interval

logger = logging.getLogger(__name__)

BOOTSTRAP_ROUNDS = 200
PDE_GROWTH_BAND = (0.5, 1.6)
ODE_GROWTH_BAND = (0.75, 1.25)
PLATEAU_TOLERANCE = 0.125  # |y(t)/y(t1)| in [7/8, 9/8]
XI3_PLATEAU_LIMIT = 0.5  # ||xi - xi2|| / ||xi2|| in L2loc over the plateau


class TooFewSamplesError(LabError, ValueError):
    pass


class NonMonotoneTimeError(LabError, ValueError):
    pass


class NonPositiveSeriesError(LabError, ValueError):
    pass


class FitWindowError(LabError, ValueError):
    """The fit window is empty, too short, or outside the sampled range."""

    pass


class GrowthWindowError(FitWindowError):
    """The growth window reaches into the x-collapse region."""

    pass


class CaseLabel(Enum):
    """Outcomes of the classification."""

    VACUUM = "I"  # dispersion dominated
    GROUND_A = "II_a"  # ground state dominant at t1
    GROUND_B = "II_b"  # excited plateau, then collapse to a ground state
    EXCITED = "III"  # excited state persists
    INCONCLUSIVE = "inconclusive"


class ClassifierParams(BaseModel):
    """Exponents and floors of the threshold definitions."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: Optional[float] = None  # None: |x0| + |y0| + ||xi0||
    delta: float = 0.75
    iota: float = 0.1
    epsilon: float = 0.025  # excited floor, epsilon0 / 4
    x_collapse_fraction: float = 0.001
    min_samples: int = 100
    decay_threshold: float = -0.4
    r1: float = 4.0
    sampling_tolerance: float = 1e-9  # slack on time order and envelopes

    @field_validator("delta")
    @classmethod
    def validate_delta(cls, v: float) -> float:
        if not is_open_interval(v, 0.6, 1.0):
            raise ValueError(f"classifier.delta must lie in (0.6, 1). Got: {v}")
        return v

    @field_validator("iota")
    @classmethod
    def validate_iota(cls, v: float) -> float:
        if not is_open_interval(v, 0.0, 0.2):
            raise ValueError(f"classifier.iota must lie in (0, 0.2). Got: {v}")
        return v

    @field_validator("epsilon", "x_collapse_fraction")
    @classmethod
    def validate_fraction(cls, v: float) -> float:
        if not is_open_interval(v, 0.0, 1.0):
            raise ValueError(f"fractions must lie in (0, 1). Got: {v}")
        return v

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v <= 0:
            raise ValueError(f"classifier.alpha must be positive. Got: {v}")
        return v

    @field_validator("sampling_tolerance")
    @classmethod
    def validate_sampling_tolerance(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"classifier.sampling_tolerance must be nonnegative. Got: {v}")
        return v

    @field_validator("r1")
    @classmethod
    def validate_r1(cls, v: float) -> float:
        if v <= 3:
            raise ValueError(f"classifier.r1 must exceed 3. Got: {v}")
        return v

    @model_validator(mode="after")
    def validate_exponent_sum(self) -> "ClassifierParams":
        if self.delta + self.iota >= 1.0:
            raise ValueError(
                f"classifier.delta + classifier.iota must be < 1. Got: {self.delta + self.iota}"
            )
        return self

    @property
    def epsilon0(self) -> float:
        return 4.0 * self.epsilon


def _optional_column(rows: list, key: str) -> Optional[np.ndarray]:
    if not rows or key not in rows[0]:
        return None
    return np.array([row[key] for row in rows], dtype=float)


@dataclass(frozen=True)
class TrajectorySeries:
    """The scalar series the classifier reads."""

    times: np.ndarray
    abs_x: np.ndarray
    abs_y: np.ndarray
    psi_l2loc: np.ndarray
    xi_l2: Optional[np.ndarray] = None
    xi3_ratio: Optional[np.ndarray] = None  # ||xi - xi2|| / ||xi2|| per sample

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @classmethod
    def from_record(cls, record) -> "TrajectorySeries":
        return cls(
            times=np.asarray(record.times, dtype=float),
            abs_x=np.asarray(record.abs_x, dtype=float),
            abs_y=np.asarray(record.abs_y, dtype=float),
            psi_l2loc=np.asarray(record.psi_l2loc, dtype=float),
            xi_l2=np.array([row["xi_l2"] for row in record.rows], dtype=float),
            xi3_ratio=_optional_column(record.rows, "xi3_ratio"),
        )


@dataclass(frozen=True)
class Thresholds:
    """t1..t4 (None: beyond horizon), sample indices, and n."""

    t1: Optional[float]
    t2: Optional[float]
    t3: Optional[float]
    t4: Optional[float]
    n: float
    alpha: float
    horizon: float
    subcase: Optional[int] = None
    indices: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    window: tuple


@dataclass(frozen=True)
class GrowthFit:
    rate: float
    ratio: float  # rate / (gamma0 n^4)
    band: tuple
    passed: bool
    window: tuple


@dataclass(frozen=True)
class PhaseDriftFit:
    """omega(t) = phase(t) + E_inf t against log t and sqrt t."""

    frequency: float  # E_inf
    log_slope: float
    log_r2: float
    sqrt_slope: float
    sqrt_r2: float
    window: tuple
    omega: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


@dataclass
class ClassificationReport:
    label: CaseLabel
    thresholds: Optional[Thresholds]
    horizon: float
    decay: Optional[DecayFit] = None
    growth: Optional[GrowthFit] = None
    late_y_decay: Optional[DecayFit] = None
    plateau_collapse: Optional[bool] = None  # |y| plateau through t2, then x-collapse
    y_variation: Optional[float] = None  # max |y/y(t1) - 1| after t1
    plateau_xi3_ratio: Optional[float] = None  # median over [t1, t3]
    relaxed: Optional[bool] = None  # t4 reached
    phase_drift: Optional[PhaseDriftFit] = None
    relaxation_constant: Optional[float] = None  # (t4 - t3) gamma0 eps^2 n^4
    notes: list = field(default_factory=list)


def bracket(s) -> np.ndarray:
    """<s> = 1 + |s|."""
    return 1.0 + np.abs(np.asarray(s, dtype=float))


def _last_compliant(ok: np.ndarray, start: int) -> Optional[int]:
    """Index of the last sample before the first failure at or after `start`.

    None when the condition holds on every sample from `start` on.
    """
    failures = np.flatnonzero(~ok[start:])
    if failures.size == 0:
        return None
    return max(start + int(failures[0]) - 1, start)


def _first(condition: np.ndarray, start: int) -> Optional[int]:
    hits = np.flatnonzero(condition[start:])
    return None if hits.size == 0 else start + int(hits[0])


def _time(series: TrajectorySeries, index: Optional[int]) -> Optional[float]:
    return None if index is None else float(series.times[index])


def default_alpha(series: TrajectorySeries) -> float:
    xi0 = 0.0 if series.xi_l2 is None else float(series.xi_l2[0])
    return float(series.abs_x[0] + series.abs_y[0] + xi0)


def _check_series(series: TrajectorySeries, params: ClassifierParams) -> None:
    if series.times.size < params.min_samples:
        raise TooFewSamplesError(
            f"Need at least {params.min_samples} samples, got {series.times.size}"
        )
    if np.any(np.diff(series.times) <= params.sampling_tolerance):
        raise NonMonotoneTimeError("Sample times must be strictly increasing")


def detect_thresholds(series: TrajectorySeries, params: ClassifierParams) -> Thresholds:
    """t1..t4 and n on the sampled series.

    Raises:
        TooFewSamplesError: Below params.min_samples samples.
        NonMonotoneTimeError: If the times are not strictly increasing.
    """
    _check_series(series, params)
    alpha = params.alpha if params.alpha is not None else default_alpha(series)
    t = series.times
    ax, ay = series.abs_x, series.abs_y
    # relative slack so values re-read from CSV land on the same side
    envelope = alpha * bracket(t) ** -1.5 * (1.0 + params.sampling_tolerance)
    horizon = series.horizon

    ok1 = np.maximum(ax, ay) ** (2.0 + params.delta) <= envelope
    i1 = _last_compliant(ok1, 0)
    if i1 is None:
        n = float(max(ax[-1], ay[-1]))
        return Thresholds(None, None, None, None, n=n, alpha=alpha, horizon=horizon)

    n = float(max(ax[i1], ay[i1]))
    indices = {"t1": i1}
    subcase = None
    if ax[i1] >= ay[i1] ** (2.0 + params.delta):
        if ay[i1] <= params.epsilon0 * n:
            subcase = 3
        elif ax[i1] >= params.x_collapse_fraction * n:
            subcase = 2
        else:
            subcase = 1

    if subcase == 3:
        i2 = i3 = i4 = i1
    else:
        if subcase in (1, 2):
            i2 = i1
        else:
            ok2 = n ** (2.0 + params.iota) * ax <= envelope
            i2 = _last_compliant(ok2, i1)
        if i2 is None:
            i3 = i4 = None
        else:
            i3 = i2 if subcase == 2 else _first(ax >= params.x_collapse_fraction * n, i2)
            i4 = None if i3 is None else _first(ay < params.epsilon * n, i3)

    indices.update({"t2": i2, "t3": i3, "t4": i4})
    thresholds = Thresholds(
        t1=_time(series, i1),
        t2=_time(series, i2),
        t3=_time(series, i3),
        t4=_time(series, i4),
        n=n,
        alpha=alpha,
        horizon=horizon,
        subcase=subcase,
        indices=indices,
    )
    logger.debug(f"Thresholds: {thresholds}")
    return thresholds


def fit_decay_exponent(
    times,
    values,
    window: Optional[tuple] = None,
    rounds: int = BOOTSTRAP_ROUNDS,
    seed: int = 0,
    confidence: float = 0.95,
) -> DecayFit:
    """Least-squares slope of log(value) against log(t) with a bootstrap CI.

    Raises:
        FitWindowError: If the window has fewer than three samples or spans
            less than one decade.
        NonPositiveSeriesError: If a value or time in the window is <= 0.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window if window is not None else (t[t > 0].min(initial=np.inf), t.max())
    mask = (t >= lo) & (t <= hi)
    tw, vw = t[mask], v[mask]
    if tw.size < 3:
        raise FitWindowError(f"Decay window [{lo:g}, {hi:g}] has {tw.size} samples")
    if np.any(vw <= 0) or np.any(tw <= 0):
        raise NonPositiveSeriesError("Decay fit needs positive times and values")
    if math.log10(tw.max() / tw.min()) < 1.0 - 1e-9:
        raise FitWindowError(f"Decay window [{tw.min():g}, {tw.max():g}] spans less than a decade")

    lx, ly = np.log(tw), np.log(vw)
    fit = linregress(lx, ly)
    rng = np.random.Generator(np.random.PCG64(seed))
    slopes = []
    for _ in range(rounds):
        pick = rng.integers(0, lx.size, lx.size)
        if np.ptp(lx[pick]) == 0:
            continue
        slopes.append(linregress(lx[pick], ly[pick]).slope)
    if slopes:
        tail = 50.0 * (1.0 - confidence)
        ci_low, ci_high = np.percentile(slopes, [tail, 100.0 - tail])
    else:
        ci_low = ci_high = fit.slope
    return DecayFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        ci_low=float(min(ci_low, fit.slope)),
        ci_high=float(max(ci_high, fit.slope)),
        window=(float(tw.min()), float(tw.max())),
    )


def fit_growth_rate(
    times,
    abs_x,
    window: tuple,
    gamma0: float,
    n: float,
    band: tuple = PDE_GROWTH_BAND,
) -> GrowthFit:
    """Exponential rate of |x| on `window`, compared with band * gamma0 n^4.

    Raises:
        GrowthWindowError: If the window has fewer than three samples, or |x|
            vanishes or exceeds n inside it.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(abs_x, dtype=float)
    mask = (t >= window[0]) & (t <= window[1])
    tw, xw = t[mask], x[mask]
    if tw.size < 3:
        raise GrowthWindowError(f"Growth window {window} has {tw.size} samples")
    if np.any(xw <= 0):
        raise GrowthWindowError("|x| vanishes inside the growth window")
    if np.any(xw > n):
        raise GrowthWindowError("Growth window overlaps the x-collapse region")
    rate = float(linregress(tw, np.log(xw)).slope)
    scale = gamma0 * n**4
    ratio = rate / scale if scale > 0 else math.inf
    return GrowthFit(
        rate=rate,
        ratio=ratio,
        band=tuple(band),
        passed=bool(band[0] <= ratio <= band[1]),
        window=(float(tw.min()), float(tw.max())),
    )


def fit_phase_drift(times, phase, frequency: float, window: tuple) -> PhaseDriftFit:
    """Fit omega = phase + frequency * t as a + b log t and as a + b sqrt t.

    `phase` must be unwrapped. The slopes are reported, not checked.

    Raises:
        FitWindowError: If the window has fewer than three samples or t <= 0 in it.
    """
    t = np.asarray(times, dtype=float)
    omega = np.asarray(phase, dtype=float) + frequency * t
    mask = (t >= window[0]) & (t <= window[1])
    tw, ow = t[mask], omega[mask]
    if tw.size < 3 or np.any(tw <= 0):
        raise FitWindowError(f"Phase window {window} has {tw.size} usable samples")
    by_log = linregress(np.log(tw), ow)
    by_sqrt = linregress(np.sqrt(tw), ow)
    return PhaseDriftFit(
        frequency=float(frequency),
        log_slope=float(by_log.slope),
        log_r2=float(by_log.rvalue**2),
        sqrt_slope=float(by_sqrt.slope),
        sqrt_r2=float(by_sqrt.rvalue**2),
        window=(float(tw.min()), float(tw.max())),
        omega=omega,
    )


def _growth_window(series: TrajectorySeries, thresholds: Thresholds) -> Optional[tuple]:
    i2, i3 = thresholds.indices.get("t2"), thresholds.indices.get("t3")
    if i2 is None:
        return None
    if i3 is not None and i3 > i2:
        return (float(series.times[i2]), float(series.times[i3]))
    # t3 == t2: grow until |x| first reaches n/2.
    end = _first(series.abs_x >= 0.5 * thresholds.n, i2)
    if end is None or end <= i2:
        return None
    return (float(series.times[i2]), float(series.times[end]))


def _plateau_xi3_ratio(series: TrajectorySeries, i1: int, i3: Optional[int]) -> Optional[float]:
    if series.xi3_ratio is None:
        return None
    end = series.times.size - 1 if i3 is None else i3
    window = series.xi3_ratio[i1 : end + 1]
    window = window[np.isfinite(window)]
    return float(np.median(window)) if window.size else None


def _decay_window(series: TrajectorySeries) -> tuple:
    return (series.horizon / 20.0, series.horizon)


def classify(
    series: TrajectorySeries,
    params: ClassifierParams,
    gamma0: Optional[float] = None,
    growth_band: tuple = PDE_GROWTH_BAND,
) -> ClassificationReport:
    """Assign the case label and attach the fits that support it.

    II_b needs the plateau-collapse signature: |y| within 1/8 of y(t1) up to t2,
    t3 reached, and, when the series carries it, a median xi3 ratio on
    [t1, t3] of at most 0.5.
    """
    horizon = float(series.times[-1]) if series.times.size else 0.0
    try:
        thresholds = detect_thresholds(series, params)
    except (TooFewSamplesError, NonMonotoneTimeError) as e:
        logger.info(f"Case: inconclusive ({e.user_message})")
        return ClassificationReport(
            label=CaseLabel.INCONCLUSIVE, thresholds=None, horizon=horizon, notes=[e.user_message]
        )

    report = ClassificationReport(label=CaseLabel.INCONCLUSIVE, thresholds=thresholds, horizon=horizon)
    t, ax, ay = series.times, series.abs_x, series.abs_y

    if thresholds.t1 is None:
        try:
            report.decay = fit_decay_exponent(t, series.psi_l2loc, _decay_window(series))
        except (FitWindowError, NonPositiveSeriesError) as e:
            report.notes.append(f"decay fit: {e.user_message}")
        if report.decay is not None and report.decay.slope < params.decay_threshold:
            report.label = CaseLabel.VACUUM
        else:
            report.notes.append("t1 beyond horizon but local norm not decaying")
    elif thresholds.subcase is not None:
        report.label = CaseLabel.GROUND_A
    else:
        i1 = thresholds.indices["t1"]
        y1 = ay[i1]
        report.y_variation = float(np.max(np.abs(ay[i1:] / y1 - 1.0))) if y1 > 0 else math.inf
        if thresholds.t2 is None:
            if report.y_variation <= PLATEAU_TOLERANCE:
                report.label = CaseLabel.EXCITED
            else:
                report.notes.append("t2 beyond horizon but |y| not stabilized")
        else:
            i2, i3 = thresholds.indices["t2"], thresholds.indices["t3"]
            plateau_variation = float(np.max(np.abs(ay[i1 : i2 + 1] / y1 - 1.0))) if y1 > 0 else math.inf
            report.plateau_collapse = plateau_variation <= PLATEAU_TOLERANCE and i3 is not None
            report.relaxed = thresholds.t4 is not None
            report.plateau_xi3_ratio = _plateau_xi3_ratio(series, i1, i3)
            if not report.plateau_collapse:
                report.notes.append(
                    "t2 reached without the plateau-collapse signature "
                    f"(|y| variation {plateau_variation:.3g} before t2, t3={thresholds.t3})"
                )
            elif report.plateau_xi3_ratio is not None and report.plateau_xi3_ratio > XI3_PLATEAU_LIMIT:
                report.notes.append(
                    f"xi not dominated by xi2 on the plateau (ratio {report.plateau_xi3_ratio:.3g})"
                )
            else:
                report.label = CaseLabel.GROUND_B

    if report.label in (CaseLabel.GROUND_A, CaseLabel.GROUND_B) and gamma0:
        window = _growth_window(series, thresholds)
        if window is not None:
            try:
                report.growth = fit_growth_rate(t, ax, window, gamma0, thresholds.n, growth_band)
            except GrowthWindowError as e:
                report.notes.append(f"growth fit: {e.user_message}")
        if thresholds.t3 is not None and thresholds.t4 is not None:
            report.relaxation_constant = (
                (thresholds.t4 - thresholds.t3) * gamma0 * params.epsilon**2 * thresholds.n**4
            )

    if report.label == CaseLabel.GROUND_B and thresholds.t4 is not None:
        late = (thresholds.t4, horizon)
        try:
            report.late_y_decay = fit_decay_exponent(t, ay, late)
        except (FitWindowError, NonPositiveSeriesError) as e:
            report.notes.append(f"late |y| fit: {e.user_message}")

    logger.info(
        f"Case: {report.label.value} (t1={thresholds.t1}, t2={thresholds.t2}, "
        f"t3={thresholds.t3}, t4={thresholds.t4}, n={thresholds.n:.4g})"
    )
    return report
