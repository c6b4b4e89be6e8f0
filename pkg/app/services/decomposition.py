"""
Decomposition psi = x phi0 + Q1(y) + xi and the nonlinearity bookkeeping.

The map from the orthogonal coefficients (xbar, ybar, xibar) to (x, y, xi) is
explicit: y = ybar, x = xbar - <phi0, Q1(y)>, xi = P_c psi - P_c Q1(y). It is
exact because <phi1, Q1(y)> = y by the branch parametrization.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.errors import LabError
from app.services.bound_states import BoundStateFamily, eval_excited, eval_excited_derivative
from app.services.grid_spectral import LinearSpectrum, RadialField, RadialGrid, project_continuous
from app.validators import require_same_grid

logger = logging.getLogger(__name__)

PHASE_FLOOR = 1e-10
DEFAULT_WEIGHT_EXPONENT = 4.0


class PhaseUndefinedError(LabError, ArithmeticError):
    """m = |y| is below the floor where theta-dot is defined."""

    pass


@dataclass(frozen=True)
class Decomposition:
    """(x, y, xi) at time t with the unwrapped phase of y."""

    x: complex
    y: complex
    xi: RadialField
    theta: float
    t: float = 0.0

    @property
    def m(self) -> float:
        return abs(self.y)

    def rotating_frame(self, spectrum: LinearSpectrum) -> tuple[complex, complex]:
        """(u, v) = (e^{i e0 t} x, e^{i e1 t} y)."""
        return (
            complex(np.exp(1j * spectrum.e0 * self.t) * self.x),
            complex(np.exp(1j * spectrum.e1 * self.t) * self.y),
        )


@dataclass(frozen=True)
class LocalNorms:
    l2loc: float
    l1loc: float
    l4: float
    l2: float


@dataclass(frozen=True)
class NonlinearityDiagnostics:
    G: RadialField
    G3: RadialField
    G_direct: RadialField
    Lambda_pi: Optional[RadialField]
    m_dot: Optional[float]
    theta_dot: Optional[float]
    G_l1loc: float
    remainder_l1loc: float  # ||G - G3||_{L1loc}
    G3_l1loc: float
    form_mismatch: float  # ||G - G_direct|| / max(||G||, tiny)
    bound_ratio: Optional[float] = None  # ||G|| / (n^2 |x| + X)
    remainder_bound_ratio: Optional[float] = None  # ||G - G3|| / (n^4 |x| + X)


def unwrap_phase(angle: float, previous: Optional[float]) -> float:
    """Add the multiple of 2 pi that brings `angle` closest to `previous`."""
    if previous is None:
        return angle
    return angle + 2.0 * math.pi * round((previous - angle) / (2.0 * math.pi))


def local_norms(grid: RadialGrid, f: RadialField, r1: float = DEFAULT_WEIGHT_EXPONENT) -> LocalNorms:
    """Weighted norms with <r> = 1 + |r| under the 3D radial measure.

    L2loc uses <r>^{-r1}, L1loc uses <r>^{-2 r1}.
    """
    if r1 <= 3:
        raise ValueError(f"Weight exponent must exceed 3. Got: {r1}")
    require_same_grid(grid.nodes, f)
    w = grid.weights
    bracket = 1.0 + np.abs(grid.r)
    modulus = np.abs(f)
    return LocalNorms(
        l2loc=float(np.sqrt(np.sum(w * (bracket ** (-r1) * modulus) ** 2))),
        l1loc=float(np.sum(w * bracket ** (-2.0 * r1) * modulus)),
        l4=float(np.sum(w * modulus**4) ** 0.25),
        l2=float(np.sqrt(np.sum(w * modulus**2))),
    )


def orthogonal_coefficients(spectrum: LinearSpectrum, psi: RadialField):
    """(xbar, ybar, xibar) = (<phi0, psi>, <phi1, psi>, P_c psi)."""
    require_same_grid(spectrum.grid.nodes, psi)
    grid = spectrum.grid
    return (
        complex(grid.inner(spectrum.phi0, psi)),
        complex(grid.inner(spectrum.phi1, psi)),
        project_continuous(spectrum, psi),
    )


def decompose(
    spectrum: LinearSpectrum,
    family: BoundStateFamily,
    psi: RadialField,
    previous_theta: Optional[float] = None,
    t: float = 0.0,
) -> Decomposition:
    """psi -> (x, y, xi) with Theta continued from `previous_theta`.

    Raises:
        OutOfRangeError: If |<phi1, psi>| is beyond the excited branch.
    """
    xbar, ybar, xibar = orthogonal_coefficients(spectrum, psi)
    q1 = eval_excited(family, ybar)
    x = xbar - complex(spectrum.grid.inner(spectrum.phi0, q1))
    xi = xibar - project_continuous(spectrum, q1)
    if ybar == 0:
        theta = previous_theta if previous_theta is not None else 0.0
    else:
        theta = unwrap_phase(math.atan2(ybar.imag, ybar.real), previous_theta)
    return Decomposition(x=x, y=ybar, xi=xi, theta=theta, t=t)


def recompose(spectrum: LinearSpectrum, family: BoundStateFamily, d: Decomposition) -> RadialField:
    """x phi0 + Q1(y) + xi."""
    require_same_grid(spectrum.grid.nodes, d.xi)
    return d.x * spectrum.phi0 + eval_excited(family, d.y) + d.xi


def _cubic_terms(spectrum: LinearSpectrum, lam: int, x: complex, y: complex) -> RadialField:
    phi0, phi1 = spectrum.phi0, spectrum.phi1
    xc, yc = np.conj(x), np.conj(y)
    return lam * (
        (y * y * xc + 2.0 * abs(y) ** 2 * x) * phi0 * phi1**2
        + (2.0 * abs(x) ** 2 * y + x * x * yc) * phi0**2 * phi1
        + abs(x) ** 2 * x * phi0**3
    )


def nonlinearity_terms(
    spectrum: LinearSpectrum,
    family: BoundStateFamily,
    d: Decomposition,
    lam: int,
    alpha: Optional[float] = None,
    r1: float = DEFAULT_WEIGHT_EXPONENT,
) -> NonlinearityDiagnostics:
    """G (expanded and direct), its cubic part G3 and, for m > floor, the modulation data.

    With alpha given, also the ratios of ||G||_{L1loc} and ||G - G3||_{L1loc}
    to n^2|x| + X and n^4|x| + X, X = n alpha ||xi||_{L2loc} + alpha ||xi||_{L4}^2.
    """
    grid = spectrum.grid
    m = d.m
    phase = d.y / m if m > 0 else 1.0
    q = np.real(eval_excited(family, m)) if m > 0 else np.zeros(grid.nodes)
    h = d.x * spectrum.phi0 + d.xi
    hc = np.conj(h)
    absh2 = np.abs(h) ** 2
    G = lam * (
        q**2 * (2.0 * h + phase**2 * hc)
        + q * (2.0 * absh2 * phase + h**2 * np.conj(phase))
        + absh2 * h
    )
    psi = q * phase + h
    G_direct = lam * (np.abs(psi) ** 2 * psi - q**3 * phase)
    G3 = _cubic_terms(spectrum, lam, d.x, d.y)

    norms_G = local_norms(grid, G, r1)
    norms_rest = local_norms(grid, G - G3, r1)
    norms_G3 = local_norms(grid, G3, r1)
    mismatch = grid.norm(G - G_direct) / max(grid.norm(G), 1e-300)

    m_dot = theta_dot = Lambda_pi = None
    if m >= PHASE_FLOOR:
        m_dot, theta_dot = modulation_rates(spectrum, d, G)
        Lambda_pi = modulation_field(spectrum, family, d, m_dot, theta_dot)

    bound_ratio = remainder_ratio = None
    if alpha is not None:
        n = max(abs(d.x), m)
        xi_norms = local_norms(grid, d.xi, r1)
        X = n * alpha * xi_norms.l2loc + alpha * xi_norms.l4**2
        bound_ratio = norms_G.l1loc / max(n**2 * abs(d.x) + X, 1e-300)
        remainder_ratio = norms_rest.l1loc / max(n**4 * abs(d.x) + X, 1e-300)

    return NonlinearityDiagnostics(
        G=G,
        G3=G3,
        G_direct=G_direct,
        Lambda_pi=Lambda_pi,
        m_dot=m_dot,
        theta_dot=theta_dot,
        G_l1loc=norms_G.l1loc,
        remainder_l1loc=norms_rest.l1loc,
        G3_l1loc=norms_G3.l1loc,
        form_mismatch=mismatch,
        bound_ratio=bound_ratio,
        remainder_bound_ratio=remainder_ratio,
    )


def modulation_rates(spectrum: LinearSpectrum, d: Decomposition, G: RadialField) -> tuple[float, float]:
    """(m_dot, theta_dot) = (<phi1, Im G e^{-i Theta}>, -<phi1, Re G e^{-i Theta}>/m).

    Raises:
        PhaseUndefinedError: If m < 1e-10.
    """
    m = d.m
    if m < PHASE_FLOOR:
        raise PhaseUndefinedError(f"Phase undefined at m={m:.3e}")
    rotated = G * np.conj(d.y / m)
    projection = complex(spectrum.grid.inner(spectrum.phi1, rotated))
    return projection.imag, -projection.real / m


def modulation_field(
    spectrum: LinearSpectrum,
    family: BoundStateFamily,
    d: Decomposition,
    m_dot: float,
    theta_dot: float,
) -> RadialField:
    """Lambda_pi: (theta_dot Q1 - i m_dot Q1') e^{i Theta} with its phi1 part removed."""
    m = d.m
    phase = d.y / m
    q = np.real(eval_excited(family, m))
    dq = np.real(eval_excited_derivative(family, m))
    Lam = (theta_dot * q - 1j * m_dot * dq) * phase
    phi1 = spectrum.phi1
    return Lam - spectrum.grid.inner(phi1, Lam) * phi1


def series_row(spectrum: LinearSpectrum, d: Decomposition, G_l1loc: float, r1: float = DEFAULT_WEIGHT_EXPONENT) -> dict:
    """One row of the decomposition time series."""
    xi_norms = local_norms(spectrum.grid, d.xi, r1)
    return {
        "t": d.t,
        "re_x": d.x.real,
        "im_x": d.x.imag,
        "re_y": d.y.real,
        "im_y": d.y.imag,
        "abs_x": abs(d.x),
        "abs_y": abs(d.y),
        "theta": d.theta,
        "xi_l2loc": xi_norms.l2loc,
        "xi_l4": xi_norms.l4,
        "xi_l2": xi_norms.l2,
        "g_l1loc": G_l1loc,
    }
