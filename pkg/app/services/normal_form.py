"""
Resolvent profiles of the cubic dispersive response and the reduced modulus system.

The profiles turn the explicit cubic forcing of xi into

    xi2 = y^2 conj(x) Phi1 + |y|^2 x Phi2 + |x|^2 y Phi3 + x^2 conj(y) Phi4 + |x|^2 x Phi5.

Phi1 sits at the resonance energy e_res = 2 e1 - e0 inside the continuum and
uses the -0i limit of grid_spectral; the other four are real resolvents at
e0, e1, 2 e0 - e1 and e0 restricted to Range(P_c).

The modulus system integrated here is

    d|mu|/dt = gamma0 |nu|^4 |mu| + g_mu,   d|nu|/dt = -2 gamma0 |mu|^2 |nu|^3 + g_nu,

which, without forcing, conserves 2|mu|^2 + |nu|^2.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from app.services.grid_spectral import (
    LinearSpectrum,
    RadialField,
    limiting_resolvent,
    project_continuous,
    resolvent_apply,
)

logger = logging.getLogger(__name__)

NF_RTOL = 1e-10

# (t, mu, nu) -> (g_mu, g_nu)
Forcing = Callable[[float, float, float], tuple[float, float]]


@dataclass(frozen=True)
class ProfileSet:
    phi1: RadialField
    phi2: RadialField
    phi3: RadialField
    phi4: RadialField
    phi5: RadialField
    lam: int
    residuals: dict = field(default_factory=dict)  # name -> relative residual
    phi1_sigmas: tuple = ()
    phi1_residuals: tuple = ()

    def scaled(self, factor: float) -> "ProfileSet":
        """Profiles for lam * factor (every Phi is linear in lam)."""
        return ProfileSet(
            phi1=factor * self.phi1,
            phi2=factor * self.phi2,
            phi3=factor * self.phi3,
            phi4=factor * self.phi4,
            phi5=factor * self.phi5,
            lam=int(self.lam * factor),
            residuals=dict(self.residuals),
            phi1_sigmas=self.phi1_sigmas,
            phi1_residuals=self.phi1_residuals,
        )


def _residual(spectrum: LinearSpectrum, profile: RadialField, z: float, rhs: RadialField) -> float:
    grid = spectrum.grid
    scale = grid.norm(rhs)
    if scale == 0.0:
        return 0.0
    lhs = spectrum.hamiltonian.apply(profile) - z * profile
    return grid.norm(lhs - rhs) / scale


def compute_profiles(spectrum: LinearSpectrum, lam: int, extension: int = 16) -> ProfileSet:
    """Phi1..Phi5 for the cubic monomials of the dispersive forcing."""
    phi0, phi1 = spectrum.phi0, spectrum.phi1
    e0, e1 = spectrum.e0, spectrum.e1
    s01 = phi0 * phi1**2
    s10 = phi0**2 * phi1
    s00 = phi0**3
    p01 = project_continuous(spectrum, s01)
    p10 = project_continuous(spectrum, s10)
    p00 = project_continuous(spectrum, s00)

    def real_profile(coefficient: float, energy: float, source: RadialField):
        profile = -coefficient * lam * resolvent_apply(spectrum, energy, source, continuous_only=True)
        residual = _residual(spectrum, profile, energy, -coefficient * lam * source)
        return np.real(profile), residual

    phi2, r2 = real_profile(2.0, e0, p01)
    phi3, r3 = real_profile(2.0, e1, p10)
    phi4, r4 = real_profile(1.0, 2.0 * e0 - e1, p10)
    phi5, r5 = real_profile(1.0, e0, p00)

    if lam == 0:
        phi1_field = np.zeros(spectrum.grid.nodes, dtype=complex)
        sigmas, ladder_residuals = (), ()
    else:
        limit = limiting_resolvent(spectrum, s01, spectrum.e_res, extension)
        phi1_field = -lam * limit.field
        sigmas, ladder_residuals = limit.sigmas, limit.residuals

    residuals = {"phi2": r2, "phi3": r3, "phi4": r4, "phi5": r5}
    logger.info(
        f"Profiles computed: max real residual={max(residuals.values()):.2e}, "
        f"Phi1 ladder residual={max(ladder_residuals, default=0.0):.2e}"
    )
    return ProfileSet(
        phi1=phi1_field,
        phi2=phi2,
        phi3=phi3,
        phi4=phi4,
        phi5=phi5,
        lam=lam,
        residuals=residuals,
        phi1_sigmas=tuple(sigmas),
        phi1_residuals=tuple(ladder_residuals),
    )


def xi2(x: complex, y: complex, profiles: ProfileSet) -> RadialField:
    """Main cubic part of xi."""
    xc, yc = np.conj(x), np.conj(y)
    ax2, ay2 = abs(x) ** 2, abs(y) ** 2
    return (
        y * y * xc * profiles.phi1
        + ay2 * x * profiles.phi2
        + ax2 * y * profiles.phi3
        + x * x * yc * profiles.phi4
        + ax2 * x * profiles.phi5
    )


def xi3(xi: RadialField, x: complex, y: complex, profiles: ProfileSet) -> RadialField:
    """Remainder xi - xi2."""
    return xi - xi2(x, y, profiles)


@dataclass(frozen=True)
class NFSeries:
    t: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    gamma0: float
    clipped: bool = False
    invariant_drift: float = 0.0  # relative drift of 2 mu^2 + nu^2


def pin_mu(gamma0: float) -> Forcing:
    """Forcing that cancels the growth of |mu|, freezing it at its initial value."""

    def forcing(t: float, mu: float, nu: float) -> tuple[float, float]:
        return -gamma0 * nu**4 * mu, 0.0

    return forcing


def integrate_radial_nf(
    mu0: float,
    nu0: float,
    gamma0: float,
    t_final: float,
    forcing: Optional[Forcing] = None,
    t_eval: Optional[np.ndarray] = None,
    rtol: float = NF_RTOL,
) -> NFSeries:
    """Adaptive RK45 integration of the modulus system.

    Amplitudes pushed below zero by a forcing are clipped at zero and the
    `clipped` flag is set.
    """
    if mu0 < 0 or nu0 < 0 or gamma0 < 0:
        raise ValueError("Amplitudes and gamma0 must be nonnegative")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_final, 1001)
    scale = max(mu0, nu0, 1e-300)

    def rhs(t, state):
        mu, nu = max(state[0], 0.0), max(state[1], 0.0)
        d_mu = gamma0 * nu**4 * mu
        d_nu = -2.0 * gamma0 * mu**2 * nu**3
        if forcing is not None:
            g_mu, g_nu = forcing(t, mu, nu)
            d_mu += g_mu
            d_nu += g_nu
        return [d_mu, d_nu]

    def mu_zero(t, state):
        return state[0]

    def nu_zero(t, state):
        return state[1]

    events = [mu_zero, nu_zero] if forcing is not None else None
    if t_final == 0:
        t = np.array([0.0])
        values = np.array([[mu0], [nu0]])
        event_hit = False
    else:
        solution = solve_ivp(
            rhs,
            (0.0, t_final),
            [mu0, nu0],
            method="RK45",
            t_eval=t_eval,
            rtol=rtol,
            atol=1e-14 * scale,
            events=events,
        )
        if not solution.success:
            raise RuntimeError(f"Normal-form integration failed: {solution.message}")
        t, values = solution.t, solution.y
        event_hit = bool(events) and any(e.size > 0 for e in solution.t_events)

    clipped = event_hit or bool(np.any(values < 0))
    mu = np.maximum(values[0], 0.0)
    nu = np.maximum(values[1], 0.0)
    invariant = 2.0 * mu**2 + nu**2
    drift = float(np.max(np.abs(invariant - invariant[0])) / max(invariant[0], 1e-300))
    if clipped:
        logger.warning("Normal-form amplitude clipped at zero")
    return NFSeries(t=t, mu=mu, nu=nu, gamma0=gamma0, clipped=clipped, invariant_drift=drift)


@dataclass(frozen=True)
class RelaxationPrediction:
    """Comparison envelopes for |nu| and the characteristic times."""

    mu0: float
    nu0: float
    gamma0: float
    mu_inf: float
    asymptotic_coefficient: float  # |nu| ~ coefficient * t^{-1/2}
    crossover_time: float
    efold_time: float

    def lower(self, t) -> np.ndarray:
        return (self.nu0**-2 + 4.0 * self.gamma0 * self.mu_inf**2 * np.asarray(t)) ** -0.5

    def upper(self, t) -> np.ndarray:
        return (self.nu0**-2 + 4.0 * self.gamma0 * self.mu0**2 * np.asarray(t)) ** -0.5


def predict_relaxation(mu0: float, nu0: float, gamma0: float) -> RelaxationPrediction:
    """Envelopes from d(|nu|^-2)/dt = 4 gamma0 |mu|^2 with mu0 <= |mu| <= mu_inf."""
    if mu0 <= 0 or nu0 <= 0:
        raise ValueError("predict_relaxation needs mu0 > 0 and nu0 > 0")
    mu_inf = math.sqrt(mu0**2 + 0.5 * nu0**2)
    n = max(mu0, nu0)
    if gamma0 == 0:
        return RelaxationPrediction(mu0, nu0, gamma0, mu_inf, math.inf, math.inf, math.inf)
    return RelaxationPrediction(
        mu0=mu0,
        nu0=nu0,
        gamma0=gamma0,
        mu_inf=mu_inf,
        asymptotic_coefficient=(4.0 * gamma0 * mu_inf**2) ** -0.5,
        crossover_time=1.0 / (4.0 * gamma0 * mu_inf**2 * nu0**2),
        efold_time=1.0 / (gamma0 * n**4),
    )
