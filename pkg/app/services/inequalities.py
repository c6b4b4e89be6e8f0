"""
Numerical check of the four time-integral inequalities used by the
threshold estimates.

With tau = t - T >= 0 and m(u) = min(u^{-3/2}, u^{-3/4}):

    cal-1  int_{T-dt}^{T} |t-s|^{-3/4} ds              <= C dt (dt + tau)^{-3/4}
    cal-2  int_{T-dt}^{T} m(t-s) ds                     <= C dt/(dt + tau) <tau>^{-1/2}
    cal-3  int_{T}^{t} (t-s)^{-3/4} s^{-3/2} ds         <= C T^{-1/2} t^{-3/4}
    cal-4  int_{T}^{t} m(t-s) s^{-3/2} ds               <= C t^{-3/2}

for t >= T >= 1 and dt >= 1. Each check evaluates LHS/RHS on deterministic
anchor points plus seeded random samples and reports the largest ratio as the
empirical constant.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

logger = logging.getLogger(__name__)

MIN_SAMPLES = 1000
STABILITY = 0.10
_LOG_SPAN = 4.0  # random parameters range over [1, 1e4]


@dataclass(frozen=True)
class InequalityResult:
    name: str
    constant: float
    constant_doubled: float
    samples: int
    passed: bool

    @property
    def relative_change(self) -> float:
        return abs(self.constant_doubled - self.constant) / self.constant


def _bracket(s: float) -> float:
    return 1.0 + abs(s)


def _min_kernel_antiderivative(u: float) -> float:
    # F' = m(u), F(0) = 0
    if u <= 1.0:
        return 4.0 * u**0.25
    return 6.0 - 2.0 / math.sqrt(u)


def cal1_ratio(t: float, T: float, dt: float) -> float:
    tau = t - T
    lhs = 4.0 * ((tau + dt) ** 0.25 - tau**0.25)
    return lhs / (dt * (dt + tau) ** -0.75)


def cal2_lhs(t: float, T: float, dt: float) -> float:
    tau = t - T
    return _min_kernel_antiderivative(tau + dt) - _min_kernel_antiderivative(tau)


def cal2_ratio(t: float, T: float, dt: float) -> float:
    tau = t - T
    return cal2_lhs(t, T, dt) / (dt / (dt + tau) / math.sqrt(_bracket(tau)))


def cal3_lhs(t: float, T: float) -> float:
    if t <= T:
        return 0.0
    value, _ = quad(lambda s: s**-1.5, T, t, weight="alg", wvar=(0.0, -0.75))
    return value


def cal3_ratio(t: float, T: float, dt: float = 0.0) -> float:
    return cal3_lhs(t, T) / (T**-0.5 * t**-0.75)


def cal4_lhs(t: float, T: float) -> float:
    if t <= T:
        return 0.0
    split = max(T, t - 1.0)
    near, _ = quad(lambda s: s**-1.5, split, t, weight="alg", wvar=(0.0, -0.75))
    far = 0.0
    if split > T:
        far, _ = quad(lambda s: (t - s) ** -1.5 * s**-1.5, T, split, limit=200)
    return near + far


def cal4_ratio(t: float, T: float, dt: float = 0.0) -> float:
    return cal4_lhs(t, T) / t**-1.5


INEQUALITIES: dict[str, Callable[[float, float, float], float]] = {
    "cal-1": cal1_ratio,
    "cal-2": cal2_ratio,
    "cal-3": cal3_ratio,
    "cal-4": cal4_ratio,
}


def anchor_points() -> list[tuple[float, float, float]]:
    """Deterministic (t, T, dt) triples where the ratios peak or have closed forms."""
    points = []
    for T in (1.0, 10.0, 1e3):
        for dt in (1.0, 10.0, 1e3):
            for tau in (0.0, 0.5, 1.0, 2.0, 10.0):
                points.append((T + tau, T, dt))
    for t in (2.0, 20.0, 2e3, 2e4):
        points.append((t, t / 2.0, 1.0))
    for t in (1e2, 1e4, 1e6):
        points.append((t, 1.0, 1.0))
    return points


def random_points(count: int, rng: np.random.Generator) -> list[tuple[float, float, float]]:
    T = 10.0 ** rng.uniform(0.0, _LOG_SPAN, count)
    dt = 10.0 ** rng.uniform(0.0, _LOG_SPAN, count)
    tau = 10.0 ** rng.uniform(-3.0, _LOG_SPAN, count)
    return list(zip(T + tau, T, dt))


def empirical_constant(name: str, points) -> float:
    ratio = INEQUALITIES[name]
    return float(max(ratio(t, T, dt) for t, T, dt in points))


def verify_integral_inequalities(sample_count: int = MIN_SAMPLES, seed: int = 0) -> list[InequalityResult]:
    """Empirical constant per inequality at `sample_count` and at twice that.

    Raises:
        ValueError: If sample_count < 1000.
    """
    if sample_count < MIN_SAMPLES:
        raise ValueError(f"sample_count must be at least {MIN_SAMPLES}. Got: {sample_count}")
    results = []
    anchors = anchor_points()
    for offset, name in enumerate(INEQUALITIES):
        rng = np.random.Generator(np.random.PCG64(seed + offset))
        first = anchors + random_points(sample_count, rng)
        second = first + random_points(sample_count, rng)
        c1 = empirical_constant(name, first)
        c2 = empirical_constant(name, second)
        passed = math.isfinite(c2) and abs(c2 - c1) <= STABILITY * c1
        results.append(
            InequalityResult(name=name, constant=c1, constant_doubled=c2, samples=len(first), passed=passed)
        )
        logger.info(f"{name}: C={c1:.4f} ({len(first)} samples), doubled C={c2:.4f}")
    return results
