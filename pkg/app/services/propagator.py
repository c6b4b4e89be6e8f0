"""
Strang-split propagation of i psi_t = H0 psi + lam |psi|^2 psi on the radial grid.

Half nonlinear phase rotation, one linear step from a LinearStepper backend,
half nonlinear rotation. Trajectories are decomposed every `stride` steps.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.errors import EXIT_BLOW_UP, LabError
from app.services.bound_states import BoundStateFamily
from app.services.decomposition import (
    DEFAULT_WEIGHT_EXPONENT,
    Decomposition,
    decompose,
    local_norms,
    nonlinearity_terms,
    series_row,
)
from app.services.grid_spectral import LinearSpectrum, RadialField
from app.services.normal_form import ProfileSet, xi2, xi3
from app.services.steppers import LinearStepper, StepperKind
from app.services.steppers.factory import create_stepper
from app.validators import all_finite

logger = logging.getLogger(__name__)

TARGET_SAMPLES = 1000


class BlowUpError(LabError, FloatingPointError):
    """The solution stopped being finite."""

    exit_code = EXIT_BLOW_UP


@dataclass(frozen=True)
class PDEState:
    t: float
    psi: RadialField
    dt: float
    scheme: str = "strang"


@dataclass
class TrajectoryRecord:
    """Sampled run: decompositions, conserved quantities, diagnostics, metadata."""

    times: np.ndarray
    decompositions: list
    mass: np.ndarray
    energy: np.ndarray
    psi_l2loc: np.ndarray
    rows: list  # decomposition series, one dict per sample
    m_dot: np.ndarray
    metadata: dict = field(default_factory=dict)
    final_psi: Optional[RadialField] = None

    @property
    def abs_x(self) -> np.ndarray:
        return np.array([abs(d.x) for d in self.decompositions])

    @property
    def abs_y(self) -> np.ndarray:
        return np.array([abs(d.y) for d in self.decompositions])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def mass_drift(self) -> float:
        return float(abs(self.mass[-1] - self.mass[0]) / max(self.mass[0], 1e-300))

    @property
    def energy_drift(self) -> float:
        return float(abs(self.energy[-1] - self.energy[0]) / max(abs(self.energy[0]), 1e-300))


def conserved_quantities(spectrum: LinearSpectrum, psi: RadialField, lam: int) -> tuple[float, float]:
    """(mass, energy) = (||psi||^2, 1/2 <psi, H0 psi> + lam/4 int |psi|^4)."""
    grid = spectrum.grid
    mass = grid.norm(psi) ** 2
    quadratic = 0.5 * float(np.real(grid.inner(psi, spectrum.hamiltonian.apply(psi))))
    quartic = 0.25 * lam * float(np.real(grid.integrate(np.abs(psi) ** 4)))
    return mass, quadratic + quartic


class Propagator:
    """Fixed-step Strang splitting with a pluggable linear step."""

    def __init__(
        self,
        spectrum: LinearSpectrum,
        lam: int,
        dt: float,
        stepper: Optional[LinearStepper] = None,
    ):
        self.spectrum = spectrum
        self.lam = lam
        self.dt = dt
        self.stepper = stepper or create_stepper(StepperKind.EIGENBASIS, spectrum, dt)
        if self.stepper.dt != dt:
            raise ValueError(f"Stepper dt {self.stepper.dt} does not match {dt}")

    def _nonlinear(self, psi: RadialField, tau: float) -> RadialField:
        if self.lam == 0:
            return psi
        return psi * np.exp(-1j * self.lam * np.abs(psi) ** 2 * tau)

    def step(self, state: PDEState) -> PDEState:
        """One Strang step of length self.dt.

        Raises:
            BlowUpError: If the new field has NaN or Inf entries.
        """
        half = 0.5 * self.dt
        psi = self._nonlinear(state.psi, half)
        psi = self.stepper.advance(psi)
        psi = self._nonlinear(psi, half)
        if not all_finite(psi):
            raise BlowUpError(f"Solution blew up at t={state.t + self.dt:.6g}")
        return PDEState(t=state.t + self.dt, psi=psi, dt=self.dt, scheme=self.stepper.kind.value)

    def run(self, psi0: RadialField, steps: int) -> PDEState:
        state = PDEState(t=0.0, psi=np.asarray(psi0, dtype=complex), dt=self.dt)
        for _ in range(steps):
            state = self.step(state)
        return state


def xi2_diagnostics(spectrum: LinearSpectrum, d: Decomposition, profiles: ProfileSet, r1: float) -> dict:
    """||xi2||_{L2loc} and ||xi - xi2||_{L2loc} / ||xi2||_{L2loc} at one sample."""
    main = xi2(d.x, d.y, profiles)
    main_norm = local_norms(spectrum.grid, main, r1).l2loc
    rest_norm = local_norms(spectrum.grid, xi3(d.xi, d.x, d.y, profiles), r1).l2loc
    return {"xi2_l2loc": main_norm, "xi3_ratio": rest_norm / main_norm if main_norm > 0 else np.nan}


def default_stride(steps: int) -> int:
    return max(1, steps // TARGET_SAMPLES)


def evolve_and_record(
    propagator: Propagator,
    family: BoundStateFamily,
    psi0: RadialField,
    t_final: float,
    stride: int = 0,
    metadata: Optional[dict] = None,
    alpha: Optional[float] = None,
    r1: float = DEFAULT_WEIGHT_EXPONENT,
    profiles: Optional[ProfileSet] = None,
) -> TrajectoryRecord:
    """Step to t_final, decomposing every `stride` steps and at the end.

    Args:
        propagator: Configured propagator (fixes dt and lam).
        family: Excited branch used by the decomposition.
        psi0: Initial field.
        t_final: Horizon; 0 yields a single-sample record.
        stride: Steps between samples; 0 picks about 1000 samples.
        metadata: Copied into the record.
        alpha: Initial-data size, enables the nonlinearity bound ratios.
        r1: Weight exponent of the local norms.
        profiles: Resolvent profiles; when given each row also carries
            ||xi2||_{L2loc} and the ratio ||xi - xi2|| / ||xi2|| in L2loc.
    """
    spectrum = propagator.spectrum
    lam = propagator.lam
    steps = int(round(t_final / propagator.dt)) if t_final > 0 else 0
    stride = stride or default_stride(steps)

    times, decompositions, rows = [], [], []
    mass, energy, psi_l2loc, m_dot = [], [], [], []
    previous: Optional[Decomposition] = None

    def sample(state: PDEState):
        nonlocal previous
        d = decompose(
            spectrum,
            family,
            state.psi,
            previous_theta=previous.theta if previous else None,
            t=state.t,
        )
        diagnostics = nonlinearity_terms(spectrum, family, d, lam, alpha=alpha, r1=r1)
        m_q, e_q = conserved_quantities(spectrum, state.psi, lam)
        times.append(state.t)
        decompositions.append(d)
        row = series_row(spectrum, d, diagnostics.G_l1loc, r1)
        if profiles is not None:
            row.update(xi2_diagnostics(spectrum, d, profiles, r1))
        rows.append(row)
        mass.append(m_q)
        energy.append(e_q)
        psi_l2loc.append(local_norms(spectrum.grid, state.psi, r1).l2loc)
        m_dot.append(np.nan if diagnostics.m_dot is None else diagnostics.m_dot)
        previous = d

    state = PDEState(t=0.0, psi=np.asarray(psi0, dtype=complex), dt=propagator.dt)
    sample(state)
    for k in range(1, steps + 1):
        state = propagator.step(state)
        if k % stride == 0 or k == steps:
            sample(state)

    record = TrajectoryRecord(
        times=np.array(times),
        decompositions=decompositions,
        mass=np.array(mass),
        energy=np.array(energy),
        psi_l2loc=np.array(psi_l2loc),
        rows=rows,
        m_dot=np.array(m_dot),
        metadata=dict(metadata or {}),
        final_psi=state.psi,
    )
    record.metadata.update(
        {
            "steps": steps,
            "stride": stride,
            "samples": len(times),
            "mass_drift": record.mass_drift,
            "energy_drift": record.energy_drift,
        }
    )
    logger.info(
        f"Run finished: T={record.horizon:g}, {steps} steps, {len(times)} samples, "
        f"mass drift={record.mass_drift:.2e}, energy drift={record.energy_drift:.2e}"
    )
    return record
