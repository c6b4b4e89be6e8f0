"""
Radial discretization of H0 = -Laplacian + V and its linear spectral toolkit.

Radial fields u(r) are stored as plain numpy arrays of nodal values on the
interior nodes r_i = i*dr, i = 1..N, dr = r_max/(N+1), with Dirichlet
conditions at r = 0 and r = r_max. Inner products use the 3D radial measure
w_i = 4*pi*r_i**2*dr. In the unitary coordinates a = sqrt(w)*u the operator is
the symmetric tridiagonal second-difference matrix of -(d/dr)**2 + V acting on
r*u, so every eigensolve is a scipy tridiagonal call.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from app.errors import EXIT_RESOLUTION, LabError
from app.validators import all_finite, require_same_grid

logger = logging.getLogger(__name__)

# Complex-valued radial function on the interior nodes.
RadialField = np.ndarray

# sigma ladder for the -0i limit, in units of the local continuum spacing
SIGMA_LADDER = (20.0, 10.0, 5.0, 2.5)
ESTIMATOR_AGREEMENT = 0.05
WINDOW_FRACTION = 0.2  # s0 = WINDOW_FRACTION * e_res
WINDOW_POINTS = 9
CUTOFF_MASS = 0.999
LEVEL_HALVINGS = 2  # grids dr, dr/2, dr/4 for the continuum-limit levels


class InvalidPotentialError(LabError, ValueError):
    """The potential is not finite on the grid."""

    pass


class AssumptionViolationError(LabError):
    """The operator does not have the required bound-state structure."""

    pass


class SingularResolventError(LabError, ZeroDivisionError):
    """A real spectral parameter hit a discrete eigenvalue."""

    pass


class ResolutionInsufficientError(LabError):
    """The two gamma0 estimators disagree; refine the grid or enlarge r_max."""

    exit_code = EXIT_RESOLUTION


@dataclass(frozen=True)
class RadialGrid:
    """Uniform interior grid on (0, r_max) with 3D radial quadrature weights."""

    r_max: float
    nodes: int

    def __post_init__(self):
        if self.r_max <= 0 or self.nodes < 2:
            raise ValueError(f"Invalid grid: r_max={self.r_max}, nodes={self.nodes}")

    @property
    def dr(self) -> float:
        return self.r_max / (self.nodes + 1)

    @property
    def r(self) -> np.ndarray:
        return self.dr * np.arange(1, self.nodes + 1)

    @property
    def weights(self) -> np.ndarray:
        return 4.0 * np.pi * self.r**2 * self.dr

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def integrate(self, f) -> complex:
        """Integral of f over the ball of radius r_max."""
        return np.sum(self.weights * f)

    def inner(self, f: RadialField, g: RadialField) -> complex:
        """<f, g>, antilinear in f."""
        return np.sum(self.weights * np.conj(f) * g)

    def norm(self, f: RadialField) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(f) ** 2)))

    def extended(self, factor: int) -> "RadialGrid":
        """Grid with the same step on a box `factor` times longer."""
        return RadialGrid(r_max=self.r_max * factor, nodes=(self.nodes + 1) * factor - 1)


@dataclass(frozen=True)
class Potential:
    """Smooth localized real potential.

    The only analytic form is the Gaussian well V(r) = -depth * exp(-r**2/width**2).
    `values`/`value_nodes` optionally tabulate V; it is then linearly
    interpolated and taken as zero beyond the last tabulated node.
    """

    depth: float
    width: float
    form: str = "gaussian"
    values: Optional[np.ndarray] = field(default=None, compare=False)
    value_nodes: Optional[np.ndarray] = field(default=None, compare=False)

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        if self.values is not None:
            nodes = self.value_nodes if self.value_nodes is not None else r
            return np.interp(r, nodes, self.values, right=0.0)
        if self.form != "gaussian":
            raise InvalidPotentialError(f"Unknown potential form: {self.form}")
        return -self.depth * np.exp(-((r / self.width) ** 2))

    def describe(self) -> dict:
        return {"form": self.form, "depth": self.depth, "width": self.width}


@dataclass(frozen=True)
class RadialHamiltonian:
    """Tridiagonal T = -(d/dr)**2 + V in unitary coordinates."""

    grid: RadialGrid
    potential: Potential
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    def matvec(self, a: np.ndarray) -> np.ndarray:
        """T @ a for a vector (or a stack of column vectors)."""
        out = self.diagonal.reshape((-1,) + (1,) * (a.ndim - 1)) * a
        off = self.off_diagonal.reshape((-1,) + (1,) * (a.ndim - 1))
        out[:-1] += off * a[1:]
        out[1:] += off * a[:-1]
        return out

    def apply(self, f: RadialField) -> RadialField:
        """H0 f for a radial field f."""
        sw = self.grid.sqrt_weights
        return self.matvec(sw * f) / sw

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diagonal)
            + np.diag(self.off_diagonal, 1)
            + np.diag(self.off_diagonal, -1)
        )

    def banded(self, z: complex = 0.0) -> np.ndarray:
        """(T - z) in the (1, 1) banded layout of scipy.linalg.solve_banded."""
        ab = np.zeros((3, self.grid.nodes), dtype=complex)
        ab[0, 1:] = self.off_diagonal
        ab[1, :] = self.diagonal - z
        ab[2, :-1] = self.off_diagonal
        return ab


@dataclass(frozen=True)
class LinearSpectrum:
    """Full eigendecomposition of the reduced operator.

    `vectors` holds the orthonormal eigenvectors chi_k in unitary coordinates as
    columns, sorted by energy. phi0/phi1 are radial fields of unit L2 norm,
    signed so that they are positive at the first node.

    `energies` are the eigenvalues of the discrete operator and drive every
    flow and resolvent. `continuum_levels` holds the two bound energies
    extrapolated to dr -> 0, the values to compare with an independent solver.
    """

    hamiltonian: RadialHamiltonian
    energies: np.ndarray
    vectors: np.ndarray
    eigen_residual: float
    continuum_levels: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def grid(self) -> RadialGrid:
        return self.hamiltonian.grid

    @property
    def e0(self) -> float:
        return float(self.energies[0])

    @property
    def e1(self) -> float:
        return float(self.energies[1])

    @property
    def e_res(self) -> float:
        return 2.0 * self.e1 - self.e0

    @property
    def resonant(self) -> bool:
        return self.e0 < 2.0 * self.e1

    @property
    def phi0(self) -> RadialField:
        return self.vectors[:, 0] / self.grid.sqrt_weights

    @property
    def phi1(self) -> RadialField:
        return self.vectors[:, 1] / self.grid.sqrt_weights

    def coefficients(self, f: RadialField) -> np.ndarray:
        """<chi_k, f> for every k."""
        require_same_grid(self.grid.nodes, f)
        return self.vectors.T @ (self.grid.sqrt_weights * f)

    def synthesize(self, coefficients: np.ndarray) -> RadialField:
        return (self.vectors @ coefficients) / self.grid.sqrt_weights


@dataclass(frozen=True)
class ResonanceData:
    """gamma0 with both estimator ladders and the window check."""

    gamma0: float
    gamma0_lorentzian: float
    gamma0_density: float
    sigmas: tuple = ()
    lorentzian_values: tuple = ()
    density_values: tuple = ()
    level_spacing: float = 0.0
    extension: int = 1
    clamped: bool = False
    window_s: tuple = ()
    window_gamma: tuple = ()
    window_passed: Optional[bool] = None

    @property
    def relative_disagreement(self) -> float:
        scale = max(abs(self.gamma0_lorentzian), abs(self.gamma0_density))
        if scale == 0.0:
            return 0.0
        return abs(self.gamma0_lorentzian - self.gamma0_density) / scale


def assemble_hamiltonian(grid: RadialGrid, potential: Potential) -> RadialHamiltonian:
    """Second-order finite-difference H0 on `grid`.

    Raises:
        InvalidPotentialError: If V is not finite on every node.
    """
    v = np.asarray(potential.evaluate(grid.r), dtype=float)
    if v.shape != (grid.nodes,) or not all_finite(v):
        raise InvalidPotentialError("Potential has non-finite values on the grid")
    inv_h2 = 1.0 / grid.dr**2
    diagonal = 2.0 * inv_h2 + v
    off_diagonal = np.full(grid.nodes - 1, -inv_h2)
    return RadialHamiltonian(grid, potential, diagonal, off_diagonal)


def _orient(vectors: np.ndarray) -> np.ndarray:
    signs = np.where(vectors[0] < 0, -1.0, 1.0)
    return vectors * signs


def lowest_levels(hamiltonian: RadialHamiltonian, count: int = 2) -> np.ndarray:
    """The `count` lowest eigenvalues of the discrete operator."""
    return eigh_tridiagonal(
        hamiltonian.diagonal,
        hamiltonian.off_diagonal,
        eigvals_only=True,
        select="i",
        select_range=(0, count - 1),
    )


def extrapolate_levels(
    hamiltonian: RadialHamiltonian, count: int = 2, halvings: int = LEVEL_HALVINGS
) -> np.ndarray:
    """Lowest levels extrapolated to dr -> 0 from `hamiltonian` and its halvings.

    The three-point stencil's eigenvalue error is a series in dr**2, dr**4, ...
    for a potential that is even in r. Fitting that series through the grid
    and `halvings` successive halvings of dr leaves an O(dr**(2 * halvings + 2))
    error.
    """
    if halvings < 1:
        raise ValueError(f"Need at least one halving, got {halvings}")
    grid = hamiltonian.grid
    steps, levels = [grid.dr], [lowest_levels(hamiltonian, count)]
    for k in range(1, halvings + 1):
        finer = RadialGrid(r_max=grid.r_max, nodes=(grid.nodes + 1) * 2**k - 1)
        steps.append(finer.dr)
        levels.append(lowest_levels(assemble_hamiltonian(finer, hamiltonian.potential), count))
    exponents = tuple(2 * p for p in range(1, halvings + 1))
    return np.real(richardson(steps, np.array(levels), exponents))


def solve_bound_spectrum(hamiltonian: RadialHamiltonian, refine: bool = True) -> LinearSpectrum:
    """Full eigendecomposition; checks the two-bound-state structure.

    With `refine` the two bound energies are also extrapolated to dr -> 0
    (see extrapolate_levels) and stored as `continuum_levels`.

    Raises:
        AssumptionViolationError: If fewer than two eigenvalues are negative.
    """
    energies, vectors = eigh_tridiagonal(hamiltonian.diagonal, hamiltonian.off_diagonal)
    vectors = _orient(vectors)
    residual = hamiltonian.matvec(vectors.copy()) - vectors * energies
    eigen_residual = float(np.max(np.linalg.norm(residual, axis=0)))

    negative = int(np.count_nonzero(energies < 0))
    if negative < 2:
        raise AssumptionViolationError(
            f"Need two negative eigenvalues, found {negative}"
        )
    continuum = extrapolate_levels(hamiltonian) if refine else None
    spectrum = LinearSpectrum(hamiltonian, energies, vectors, eigen_residual, continuum)
    if negative > 2:
        logger.warning(f"Potential has {negative} bound states; only the lowest two are used")
    if not spectrum.resonant:
        logger.warning(
            f"Resonance condition e0 < 2 e1 fails (e0={spectrum.e0:.6g}, e1={spectrum.e1:.6g}); "
            "results are diagnostic only"
        )
    logger.info(
        f"Spectrum solved: N={hamiltonian.grid.nodes}, e0={spectrum.e0:.8g}, "
        f"e1={spectrum.e1:.8g}, e_res={spectrum.e_res:.6g}, residual={eigen_residual:.2e}"
    )
    if continuum is not None:
        logger.debug(f"Continuum-limit levels: e0={continuum[0]:.10g}, e1={continuum[1]:.10g}")
    return spectrum


def project_continuous(spectrum: LinearSpectrum, f: RadialField) -> RadialField:
    """P_c f = f - <phi0,f> phi0 - <phi1,f> phi1."""
    require_same_grid(spectrum.grid.nodes, f)
    grid = spectrum.grid
    phi0, phi1 = spectrum.phi0, spectrum.phi1
    return f - grid.inner(phi0, f) * phi0 - grid.inner(phi1, f) * phi1


def apply_free_flow(spectrum: LinearSpectrum, f: RadialField, t: float) -> RadialField:
    """exp(-i t H0) f by eigenbasis synthesis."""
    if t == 0:
        require_same_grid(spectrum.grid.nodes, f)
        return np.array(f, copy=True)
    c = spectrum.coefficients(f)
    return spectrum.synthesize(np.exp(-1j * spectrum.energies * t) * c)


def resolvent_apply(
    spectrum: LinearSpectrum,
    z: complex,
    f: RadialField,
    continuous_only: bool = False,
) -> RadialField:
    """(H0 - z)^-1 f by eigenbasis division.

    Callers pass f in Range(P_c). With continuous_only the two bound
    components are dropped first, so z may equal e0 or e1.

    Raises:
        SingularResolventError: If z is real and equals a retained eigenvalue.
    """
    c = spectrum.coefficients(f).astype(complex)
    energies = spectrum.energies
    if continuous_only:
        c[:2] = 0.0
        energies_checked = energies[2:]
    else:
        energies_checked = energies
    if np.imag(z) == 0:
        gap = np.min(np.abs(energies_checked - np.real(z)))
        if gap <= 1e-12 * max(1.0, abs(z)):
            raise SingularResolventError(f"Resolvent is singular at z={z}")
    return spectrum.synthesize(c / (energies - z))


def resolvent_solve(hamiltonian: RadialHamiltonian, z: complex, f: RadialField) -> RadialField:
    """(H0 - z)^-1 f by a banded LU solve, independent of any eigenbasis."""
    require_same_grid(hamiltonian.grid.nodes, f)
    sw = hamiltonian.grid.sqrt_weights
    a = solve_banded((1, 1), hamiltonian.banded(z), sw * np.asarray(f, dtype=complex))
    return a / sw


def richardson(sigmas, values, exponents) -> np.ndarray:
    """Extrapolate values(sigma) to sigma -> 0 assuming sum_p c_p sigma**p.

    `values` may be a 1D array (one per sigma) or a 2D array with one row per
    sigma; the constant term is returned with the trailing shape.
    """
    s = np.asarray(sigmas, dtype=float)
    design = np.column_stack([np.ones_like(s)] + [s**p for p in exponents])
    solution, *_ = np.linalg.lstsq(design.astype(complex), np.asarray(values, dtype=complex), rcond=None)
    return solution[0]


@dataclass(frozen=True)
class ContinuumBox:
    """Same-step extension of the working box used for -0i limits.

    On the longer box the continuum levels are `extension` times denser, so a
    sigma ladder of a few level spacings stays far below the scales of the
    bound states.
    """

    grid: RadialGrid
    hamiltonian: RadialHamiltonian
    phi0: RadialField
    phi1: RadialField
    working_nodes: int
    extension: int

    def embed(self, f: RadialField) -> RadialField:
        out = np.zeros(self.grid.nodes, dtype=complex)
        out[: self.working_nodes] = f
        return out

    def restrict(self, g: RadialField) -> RadialField:
        return g[: self.working_nodes]

    def project(self, f: RadialField) -> RadialField:
        grid = self.grid
        return f - grid.inner(self.phi0, f) * self.phi0 - grid.inner(self.phi1, f) * self.phi1

    def levels(self, low: float, high: float):
        """Eigenpairs of the extended operator with energies in (low, high]."""
        energies, vectors = eigh_tridiagonal(
            self.hamiltonian.diagonal,
            self.hamiltonian.off_diagonal,
            select="v",
            select_range=(low, high),
        )
        return energies, vectors

    def free_flow(self, f: RadialField, times, energy_max: float) -> np.ndarray:
        """exp(-itH0) P_c f on the extended box for each t, one row per time.

        Only continuum levels in (0, energy_max] are kept.
        """
        require_same_grid(self.grid.nodes, f)
        energies, vectors = self.levels(0.0, energy_max)
        sw = self.grid.sqrt_weights
        c = vectors.T @ (sw * np.asarray(f, dtype=complex))
        phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), energies))
        return (phases * c) @ vectors.T / sw

    def level_spacing(self, energy: float) -> float:
        """Mean gap between the continuum levels nearest `energy`."""
        estimate = 2.0 * math.pi * math.sqrt(max(energy, 1e-12)) / self.grid.r_max
        energies = eigh_tridiagonal(
            self.hamiltonian.diagonal,
            self.hamiltonian.off_diagonal,
            eigvals_only=True,
            select="v",
            select_range=(energy - 8 * estimate, energy + 8 * estimate),
        )
        if energies.size < 3:
            return estimate
        return float(np.mean(np.diff(energies)))


def build_continuum_box(spectrum: LinearSpectrum, extension: int) -> ContinuumBox:
    """Assemble the extended box and its two bound states."""
    grid = spectrum.grid.extended(extension)
    hamiltonian = assemble_hamiltonian(grid, spectrum.hamiltonian.potential)
    _, vectors = eigh_tridiagonal(
        hamiltonian.diagonal, hamiltonian.off_diagonal, select="i", select_range=(0, 1)
    )
    vectors = _orient(vectors)
    sw = grid.sqrt_weights
    logger.debug(f"Continuum box: r_max={grid.r_max:g}, N={grid.nodes}")
    return ContinuumBox(
        grid=grid,
        hamiltonian=hamiltonian,
        phi0=vectors[:, 0] / sw,
        phi1=vectors[:, 1] / sw,
        working_nodes=spectrum.grid.nodes,
        extension=extension,
    )


@dataclass(frozen=True)
class LimitingResolvent:
    """(H0 - energy - i0)^-1 P_c f restricted to the working grid."""

    field: RadialField
    sigmas: tuple
    residuals: tuple  # relative residual of each ladder solve on the extended box
    level_spacing: float


def limiting_resolvent(
    spectrum: LinearSpectrum,
    f: RadialField,
    energy: float,
    extension: int,
    box: Optional[ContinuumBox] = None,
) -> LimitingResolvent:
    """Richardson-combined ladder of (H0 - energy - i sigma)^-1 P_c f."""
    box = box or build_continuum_box(spectrum, extension)
    spacing = box.level_spacing(energy)
    sigmas = tuple(k * spacing for k in SIGMA_LADDER)
    source = box.project(box.embed(f))
    source_norm = box.grid.norm(source)
    solutions, residuals = [], []
    for sigma in sigmas:
        z = energy + 1j * sigma
        u = resolvent_solve(box.hamiltonian, z, source)
        r = box.hamiltonian.apply(u) - z * u - source
        residuals.append(box.grid.norm(r) / max(source_norm, 1e-300))
        solutions.append(u)
    combined = richardson(sigmas, np.array(solutions), (1, 2, 3))
    return LimitingResolvent(
        field=box.restrict(combined),
        sigmas=sigmas,
        residuals=tuple(residuals),
        level_spacing=spacing,
    )


def _gaussian(x: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def _lorentzian_gamma(box: ContinuumBox, source: RadialField, energy: float, sigmas) -> list:
    values = []
    for sigma in sigmas:
        u = resolvent_solve(box.hamiltonian, energy + 1j * sigma, source)
        values.append(float(np.imag(box.grid.inner(source, u))))
    return values


def fermi_constant(
    spectrum: LinearSpectrum,
    source: Optional[RadialField] = None,
    extension: int = 16,
    check_agreement: bool = True,
    sample_window: bool = True,
) -> ResonanceData:
    """gamma0 = lim Im <f, (H0 - e_res - i sigma)^-1 P_c f> as sigma -> 0+.

    Estimator (a) solves the Lorentzian-regularized resolvent on the extended
    box; estimator (b) sums pi |<chi_k, f>|**2 against a Gaussian of width
    sigma over the extended-box levels near e_res. Both are extrapolated to
    sigma = 0 over the same ladder.

    Args:
        spectrum: Working-grid spectrum.
        source: Radial field f; defaults to phi0 * phi1**2.
        extension: Box extension factor.
        check_agreement: Raise when the estimators disagree by more than 5%.
        sample_window: Also sample gamma(s) for |s| < 0.2 e_res.

    Raises:
        AssumptionViolationError: If e_res is not in the continuous spectrum.
        ResolutionInsufficientError: If the estimators disagree.
    """
    if not spectrum.resonant:
        raise AssumptionViolationError("fermi_constant needs e0 < 2 e1")
    if source is None:
        source = spectrum.phi0 * spectrum.phi1**2
    require_same_grid(spectrum.grid.nodes, source)
    if spectrum.grid.norm(source) == 0.0:
        return ResonanceData(gamma0=0.0, gamma0_lorentzian=0.0, gamma0_density=0.0, extension=extension)

    e_res = spectrum.e_res
    box = build_continuum_box(spectrum, extension)
    f = box.project(box.embed(source))
    spacing = box.level_spacing(e_res)
    sigmas = tuple(k * spacing for k in SIGMA_LADDER)

    lorentzian = _lorentzian_gamma(box, f, e_res, sigmas)
    gamma_a = float(np.real(richardson(sigmas, lorentzian, (1, 2, 3))))

    half = 7.0 * max(sigmas)
    energies, vectors = box.levels(max(e_res - half, 0.0), e_res + half)
    weights = np.abs(vectors.T @ (box.grid.sqrt_weights * f)) ** 2
    density = [float(np.pi * np.sum(weights * _gaussian(energies - e_res, s))) for s in sigmas]
    gamma_b = float(np.real(richardson(sigmas, density, (2, 4, 6))))

    logger.info(
        f"gamma0 estimators: lorentzian={gamma_a:.6e}, density={gamma_b:.6e}, "
        f"spacing={spacing:.3e}, levels={energies.size}"
    )
    data = dict(
        gamma0_lorentzian=gamma_a,
        gamma0_density=gamma_b,
        sigmas=sigmas,
        lorentzian_values=tuple(lorentzian),
        density_values=tuple(density),
        level_spacing=spacing,
        extension=extension,
    )
    scale = max(abs(gamma_a), abs(gamma_b))
    if scale > 0 and abs(gamma_a - gamma_b) > ESTIMATOR_AGREEMENT * scale:
        message = (
            f"gamma0 estimators disagree: {gamma_a:.4e} vs {gamma_b:.4e}; "
            "increase grid.nodes or grid.r_max"
        )
        if check_agreement:
            raise ResolutionInsufficientError(message)
        logger.debug(message)

    gamma0 = gamma_a
    clamped = False
    if gamma0 < 0:
        logger.warning(f"gamma0 extrapolated to {gamma0:.3e} < 0; clamped to 0")
        gamma0, clamped = 0.0, True

    window_s, window_gamma, passed = (), (), None
    if sample_window:
        s0 = WINDOW_FRACTION * e_res
        window_s = tuple(np.linspace(-s0, s0, WINDOW_POINTS))
        window_gamma = tuple(
            float(np.real(richardson(sigmas, _lorentzian_gamma(box, f, e_res + s, sigmas), (1, 2, 3))))
            for s in window_s
        )
        passed = bool(min(window_gamma) >= 0.75 * gamma0)
        if not passed:
            logger.warning(
                f"gamma(s) window check failed: min={min(window_gamma):.3e} < 0.75 gamma0"
            )

    return ResonanceData(
        gamma0=gamma0,
        clamped=clamped,
        window_s=window_s,
        window_gamma=window_gamma,
        window_passed=passed,
        **data,
    )


def energy_cutoff(spectrum: LinearSpectrum, f: RadialField, mass_fraction: float = CUTOFF_MASS) -> float:
    """Energy below which `mass_fraction` of the P_c mass of f lies."""
    c = spectrum.coefficients(f)[2:]
    mass = np.abs(c) ** 2
    total = mass.sum()
    if total == 0:
        return 0.0
    cumulative = np.cumsum(mass) / total
    index = int(np.searchsorted(cumulative, mass_fraction))
    return float(max(spectrum.energies[2 + min(index, mass.size - 1)], 0.0))


def reflection_budget(spectrum: LinearSpectrum, f: RadialField, lam: int) -> float:
    """Longest run before outgoing radiation can return from r_max.

    r_max / (2 v_max) with v_max = 2 sqrt(eps_cut). With the nonlinearity on,
    eps_cut is at least e_res, the energy the resonant channel radiates at.
    """
    eps_cut = energy_cutoff(spectrum, f)
    if lam != 0 and spectrum.resonant:
        eps_cut = max(eps_cut, spectrum.e_res)
    if eps_cut <= 0:
        return math.inf
    return spectrum.grid.r_max / (2.0 * 2.0 * math.sqrt(eps_cut))


def absorbing_potential(grid: RadialGrid, strength: float, ramp_fraction: float = 0.2) -> np.ndarray:
    """Quartic CAP ramp W(r) >= 0 over the outer `ramp_fraction` of the box."""
    r_c = grid.r_max * (1.0 - ramp_fraction)
    x = np.clip((grid.r - r_c) / (grid.r_max - r_c), 0.0, None)
    return strength * x**4
