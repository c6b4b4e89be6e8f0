"""
Nonlinear bound-state families bifurcating from the linear eigenmodes.

Each profile solves (H0 - E) Q + lam Q**3 = 0 with the amplitude constraint
<phi, Q> = a, where phi is phi0 (ground branch, a = n) or phi1 (excited
branch, a = m). E is the Lagrange multiplier of the constraint. Solves use
Newton's method on the bordered system

    [ T - E + 3 lam diag(q**2 / w)   -q ] [dq]   [ -F ]
    [ chi^T                           0 ] [dE] = [ -g ]

in unitary coordinates q = sqrt(w) Q.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, solve_banded
from scipy.sparse.linalg import spsolve

from app.errors import LabError
from app.services.grid_spectral import LinearSpectrum, RadialField

logger = logging.getLogger(__name__)

MAX_NEWTON_ITERATIONS = 50
NEWTON_TOLERANCE = 1e-11  # relative to ||Q||
DERIVATIVE_AGREEMENT = 0.02


class ContinuationFailedError(LabError):
    """Newton did not converge; `last_good` is the last converged amplitude."""

    def __init__(self, user_message: str, last_good: Optional[float] = None):
        super().__init__(user_message)
        self.last_good = last_good


class DerivativeFailedError(LabError):
    """The linearized operator is singular (branch fold) or inconsistent."""

    pass


class OutOfRangeError(LabError, ValueError):
    """Amplitude outside the sampled branch."""

    pass


@dataclass(frozen=True)
class FamilyDerivatives:
    """R_E = dQ/dE two ways, c1 = 1/<Q, R>, and dQ/da along the branch."""

    linearized: np.ndarray  # (samples, N), L_+^-1 Q
    finite_difference: np.ndarray  # (samples, N), along-branch differences
    mismatch: np.ndarray  # relative L2 difference per sample
    c1: np.ndarray
    amplitude_derivative: np.ndarray  # dQ/da per sample


@dataclass(frozen=True)
class BoundStateFamily:
    """Sampled branch a -> (Q(a), E(a)) with a = <phi, Q>."""

    branch: str  # "ground" | "excited"
    lam: int
    spectrum: LinearSpectrum
    amplitudes: np.ndarray
    energies: np.ndarray
    profiles: np.ndarray  # (samples, N), real
    residuals: np.ndarray  # (Q.eq) residual / ||Q||
    linear_energy: float
    perturbation_coefficient: float  # lam * int phi**4
    coefficient_2: float = np.nan
    coefficient_4: float = np.nan
    derivatives: Optional[FamilyDerivatives] = None

    @property
    def basis(self) -> RadialField:
        return self.spectrum.phi0 if self.branch == "ground" else self.spectrum.phi1

    @property
    def max_amplitude(self) -> float:
        return float(self.amplitudes[-1])

    @property
    def norms(self) -> np.ndarray:
        grid = self.spectrum.grid
        return np.array([grid.norm(q) for q in self.profiles])

    @property
    def correction_ratios(self) -> np.ndarray:
        """||Q - a phi|| / a**3 per sample (bounded near bifurcation)."""
        grid = self.spectrum.grid
        h = self.profiles - self.amplitudes[:, None] * self.basis[None, :]
        return np.array([grid.norm(row) for row in h]) / self.amplitudes**3

    @property
    def c1(self) -> Optional[np.ndarray]:
        return None if self.derivatives is None else self.derivatives.c1

    def _shape_spline(self) -> CubicSpline:
        # P(a) = Q(a)/a with P(0) = phi, so that <phi, a P(a)> = a on every node.
        knots = np.concatenate(([0.0], self.amplitudes))
        shapes = np.vstack([self.basis, self.profiles / self.amplitudes[:, None]])
        return CubicSpline(knots, shapes, axis=0)

    def _check_range(self, modulus: float) -> None:
        if modulus > self.max_amplitude * (1.0 + 1e-12):
            raise OutOfRangeError(
                f"Amplitude {modulus:.4g} beyond the {self.branch} branch (max {self.max_amplitude:.4g})"
            )

    def profile(self, amplitude: complex) -> RadialField:
        """Q(|a|) * a/|a|, cubic in |a| between samples; Q(0) = 0."""
        modulus = abs(amplitude)
        if modulus == 0.0:
            return np.zeros(self.spectrum.grid.nodes, dtype=complex)
        self._check_range(modulus)
        return self._shape_spline()(modulus) * amplitude

    def profile_derivative(self, modulus: float) -> RadialField:
        """dQ/da at real a = modulus."""
        self._check_range(modulus)
        spline = self._shape_spline()
        return spline(modulus) + modulus * spline(modulus, 1)

    def energy(self, modulus: float) -> float:
        """E(a) from the even fit E = e + E2 a**2 + E4 a**4."""
        return self.linear_energy + self.coefficient_2 * modulus**2 + self.coefficient_4 * modulus**4


def geometric_amplitudes(a_max: float, count: int) -> np.ndarray:
    """a_max * 2**(-k/2), k = count-1, ..., 0, ascending."""
    return a_max * 2.0 ** (-np.arange(count - 1, -1, -1) / 2.0)


def equation_residual(spectrum: LinearSpectrum, lam: int, profile: RadialField, energy: float) -> float:
    """||(H0 - E) Q + lam Q**3|| / ||Q||."""
    hamiltonian = spectrum.hamiltonian
    grid = spectrum.grid
    residual = hamiltonian.apply(profile) - energy * profile + lam * np.abs(profile) ** 2 * profile
    return grid.norm(residual) / max(grid.norm(profile), 1e-300)


def _newton(
    spectrum: LinearSpectrum,
    lam: int,
    chi: np.ndarray,
    amplitude: float,
    q: np.ndarray,
    energy: float,
):
    hamiltonian = spectrum.hamiltonian
    w = spectrum.grid.weights
    n = q.size
    off = hamiltonian.off_diagonal
    for iteration in range(MAX_NEWTON_ITERATIONS):
        f = hamiltonian.matvec(q) - energy * q + lam * q**3 / w
        g = chi @ q - amplitude
        scale = np.linalg.norm(q)
        if np.linalg.norm(f) <= NEWTON_TOLERANCE * scale and abs(g) <= 1e-12 * max(amplitude, 1e-300):
            return q, energy, iteration
        diagonal = hamiltonian.diagonal - energy + 3.0 * lam * q**2 / w
        jacobian = sparse.bmat(
            [
                [sparse.diags([off, diagonal, off], [-1, 0, 1]), sparse.csc_matrix(-q[:, None])],
                [sparse.csc_matrix(chi[None, :]), None],
            ],
            format="csc",
        )
        step = spsolve(jacobian, -np.concatenate((f, [g])))
        if not np.all(np.isfinite(step)):
            break
        q = q + step[:n]
        energy = energy + step[n]
    return None


def _continue_branch(
    spectrum: LinearSpectrum, lam: int, amplitudes: Sequence[float], branch: str
) -> BoundStateFamily:
    amplitudes = np.sort(np.asarray(amplitudes, dtype=float))
    if amplitudes.size == 0 or amplitudes[0] <= 0:
        raise ValueError("Branch amplitudes must be positive")
    grid = spectrum.grid
    index = 0 if branch == "ground" else 1
    chi = spectrum.vectors[:, index]
    phi = chi / grid.sqrt_weights
    linear_energy = float(spectrum.energies[index])
    perturbation = float(lam * np.real(grid.integrate(phi**4)))

    profiles, energies, residuals = [], [], []
    q = amplitudes[0] * chi
    energy = linear_energy + perturbation * amplitudes[0] ** 2
    previous = None
    for amplitude in amplitudes:
        if previous is not None:
            q = profiles[-1] * grid.sqrt_weights * (amplitude / previous)
            energy = linear_energy + (energies[-1] - linear_energy) * (amplitude / previous) ** 2
        solved = _newton(spectrum, lam, chi, amplitude, q, energy)
        if solved is None:
            last_good = float(previous) if previous is not None else None
            raise ContinuationFailedError(
                f"Newton failed on the {branch} branch at amplitude {amplitude:.4g}",
                last_good=last_good,
            )
        q, energy, iterations = solved
        profile = q / grid.sqrt_weights
        profiles.append(profile)
        energies.append(energy)
        residuals.append(equation_residual(spectrum, lam, profile, energy))
        previous = amplitude
        logger.debug(f"{branch} a={amplitude:.4e}: E={energy:.10g} in {iterations} Newton steps")

    energies = np.array(energies)
    design = np.column_stack((amplitudes**2, amplitudes**4))
    (c2, c4), *_ = np.linalg.lstsq(design, energies - linear_energy, rcond=None)
    family = BoundStateFamily(
        branch=branch,
        lam=lam,
        spectrum=spectrum,
        amplitudes=amplitudes,
        energies=energies,
        profiles=np.array(profiles),
        residuals=np.array(residuals),
        linear_energy=linear_energy,
        perturbation_coefficient=perturbation,
        coefficient_2=float(c2),
        coefficient_4=float(c4),
    )
    if lam != 0 and amplitudes.size >= 5:
        family = replace(family, derivatives=family_derivatives(family))
    logger.info(
        f"Continued {branch} branch: {amplitudes.size} samples up to a={amplitudes[-1]:.3g}, "
        f"E2={c2:.6g} (perturbative {perturbation:.6g}), max residual={max(residuals):.2e}"
    )
    return family


def continue_ground_family(
    spectrum: LinearSpectrum, lam: int, amplitudes: Sequence[float]
) -> BoundStateFamily:
    """Ground branch Q_E = n phi0 + h, h orthogonal to phi0, one sample per n."""
    return _continue_branch(spectrum, lam, amplitudes, "ground")


def continue_excited_family(
    spectrum: LinearSpectrum, lam: int, amplitudes: Sequence[float]
) -> BoundStateFamily:
    """Excited branch Q1(m) with <phi1, Q1(m)> = m."""
    return _continue_branch(spectrum, lam, amplitudes, "excited")


def eval_excited(family: BoundStateFamily, y: complex) -> RadialField:
    """Q1(y) = Q1(|y|) y/|y|."""
    if family.branch != "excited":
        raise ValueError("eval_excited needs the excited branch")
    return family.profile(y)


def eval_excited_derivative(family: BoundStateFamily, m: float) -> RadialField:
    """dQ1/dm at modulus m."""
    if family.branch != "excited":
        raise ValueError("eval_excited_derivative needs the excited branch")
    return family.profile_derivative(m)


def family_derivatives(family: BoundStateFamily) -> FamilyDerivatives:
    """R_E = dQ/dE by the linearized solve and by along-branch differences.

    Raises:
        DerivativeFailedError: On a singular linearized operator, fewer than five
            samples, a mismatch above 2% between the two methods, or lam * c1 <= 0.
    """
    if family.amplitudes.size < 5:
        raise DerivativeFailedError("Need at least five branch samples for derivatives")
    spectrum = family.spectrum
    grid = spectrum.grid
    hamiltonian = spectrum.hamiltonian
    sw = grid.sqrt_weights

    linearized = np.empty_like(family.profiles)
    for k, (profile, energy) in enumerate(zip(family.profiles, family.energies)):
        ab = np.zeros((3, grid.nodes))
        ab[0, 1:] = hamiltonian.off_diagonal
        ab[1, :] = hamiltonian.diagonal - energy + 3.0 * family.lam * profile**2
        ab[2, :-1] = hamiltonian.off_diagonal
        try:
            solution = solve_banded((1, 1), ab, sw * profile)
        except (LinAlgError, ValueError) as e:
            raise DerivativeFailedError(f"Linearized operator singular at sample {k}: {e}") from e
        if not np.all(np.isfinite(solution)):
            raise DerivativeFailedError(f"Linearized solve not finite at sample {k}")
        linearized[k] = solution / sw

    da = np.gradient(family.profiles, family.amplitudes, axis=0, edge_order=2)
    de = np.gradient(family.energies, family.amplitudes, edge_order=2)
    if np.any(de == 0):
        raise DerivativeFailedError("E(a) is stationary along the branch")
    finite_difference = da / de[:, None]

    # the branch's own dE/d||Q||^2 fixes the sign of c1
    c1_branch = 1.0 / np.array([np.real(grid.inner(q, r)) for q, r in zip(family.profiles, finite_difference)])
    if np.any(family.lam * c1_branch <= 0):
        raise DerivativeFailedError(f"lam * c1 <= 0 along the {family.branch} branch")

    mismatch = np.array(
        [grid.norm(a - b) / max(grid.norm(a), 1e-300) for a, b in zip(linearized, finite_difference)]
    )
    if np.max(mismatch) > DERIVATIVE_AGREEMENT:
        raise DerivativeFailedError(
            f"R_E methods disagree by {np.max(mismatch):.2%} on the {family.branch} branch"
        )
    c1 = 1.0 / np.array([np.real(grid.inner(q, r)) for q, r in zip(family.profiles, linearized)])
    if np.any(family.lam * c1 <= 0):
        raise DerivativeFailedError(f"lam * c1 <= 0 from the linearized solve on the {family.branch} branch")
    return FamilyDerivatives(
        linearized=linearized,
        finite_difference=finite_difference,
        mismatch=mismatch,
        c1=c1,
        amplitude_derivative=da,
    )
