"""
Experiment pipeline: potential design, context assembly, initial data, runs and sweeps.

A LabContext bundles everything that depends only on the potential, the grid
and the model (spectrum, gamma0, branches). Runs build their initial datum on
top of a context, propagate, classify and write their artifacts; sweeps share
whatever part of the context the swept field leaves untouched.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from app.config import ExperimentConfig, Settings, settings
from app.errors import EXIT_DESIGN_FAILED, LabError
from app.services.bound_states import (
    BoundStateFamily,
    continue_excited_family,
    continue_ground_family,
    geometric_amplitudes,
)
from app.services.classifier import (
    CaseLabel,
    ClassificationReport,
    DecayFit,
    FitWindowError,
    NonPositiveSeriesError,
    PhaseDriftFit,
    TrajectorySeries,
    classify,
    fit_decay_exponent,
    fit_phase_drift,
)
from app.services.decomposition import decompose, local_norms
from app.services.grid_spectral import (
    LinearSpectrum,
    Potential,
    RadialField,
    RadialGrid,
    ResonanceData,
    absorbing_potential,
    assemble_hamiltonian,
    build_continuum_box,
    energy_cutoff,
    extrapolate_levels,
    fermi_constant,
    project_continuous,
    reflection_budget,
    solve_bound_spectrum,
)
from app.services.normal_form import ProfileSet, compute_profiles
from app.services.propagator import Propagator, TrajectoryRecord, evolve_and_record
from app.services.report import fits_frame, render_classification, write_text
from app.services.shooting import shooting_eigenvalues
from app.services.steppers import StepperKind
from app.services.steppers.factory import create_stepper
from app.services.storage import write_frame, write_trajectory

logger = logging.getLogger(__name__)

DESIGN_SCAN = np.geomspace(1.0, 200.0, 60)  # depth * width**2
MIN_LOCALIZATION = 8.0  # sqrt(|e1|) * r_max
BRANCH_HEADROOM = 1.5
NOISE_BUMPS = 8
FREE_DECAY_MASS = 1.0 - 1e-8  # spectral mass of the packet kept by the free flow
RNG_NAME = "PCG64"
SWEEP_COLUMNS = [
    "value",
    "case",
    "decay_slope",
    "growth_ratio",
    "late_y_slope",
    "t1",
    "t2",
    "t3",
    "t4",
    "n",
    "error",
]


class DesignFailedError(LabError):
    """No well depth gives two bound states with the requested margin."""

    exit_code = EXIT_DESIGN_FAILED


# ---------------------------------------------------------------------------
# Potential design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialDesign:
    potential: Potential
    e0: float
    e1: float
    margin: float
    achieved_margin: float  # (2 e1 - e0) / |e0|
    window: tuple  # depths bounding the two-state window
    fallback: bool = False
    oracle: Optional[tuple] = None  # shooting (e0, e1), extrapolated in the step
    continuum: Optional[tuple] = None  # finite-difference (e0, e1) extrapolated to dr -> 0

    @property
    def oracle_mismatch(self) -> Optional[float]:
        """Largest relative gap between the two dr -> 0 level estimates."""
        if self.oracle is None or self.continuum is None:
            return None
        return max(abs(o - c) / abs(c) for o, c in zip(self.oracle, self.continuum))


def _lowest_levels(grid: RadialGrid, depth: float, width: float) -> np.ndarray:
    hamiltonian = assemble_hamiltonian(grid, Potential(depth=depth, width=width))
    return eigh_tridiagonal(
        hamiltonian.diagonal,
        hamiltonian.off_diagonal,
        eigvals_only=True,
        select="i",
        select_range=(0, 2),
    )


def _bound_count(grid: RadialGrid, depth: float, width: float) -> int:
    return int(np.count_nonzero(_lowest_levels(grid, depth, width) < 0))


def _depth_edge(grid: RadialGrid, width: float, low: float, high: float, count: int) -> float:
    """Smallest depth in (low, high] with at least `count` bound states."""
    for _ in range(80):
        mid = 0.5 * (low + high)
        if _bound_count(grid, mid, width) >= count:
            high = mid
        else:
            low = mid
        if high - low <= 1e-12 * high:
            break
    return high


def design_potential(
    width: float,
    margin: float,
    r_max: float,
    nodes: int,
    oracle: bool = True,
) -> PotentialDesign:
    """Gaussian well depth with two bound states and 2 e1 - e0 >= margin |e0|.

    Scans the depth, bisects the edges of the two-state window and then
    solves (2 e1 - e0)/|e0| = (1 + margin)/2 inside it. When the ratio never
    comes down to that target the deepest admissible depth is used.

    Args:
        width: Gaussian width a.
        margin: Required resonance margin, in (0, 0.5).
        r_max: Box radius of the working grid.
        nodes: Interior nodes of the working grid.
        oracle: Also recompute (e0, e1) by Numerov shooting.

    Raises:
        DesignFailedError: If the window is empty, the margin is out of reach
            or the excited state does not fit in the box.
    """
    if not 0.0 < margin < 0.5:
        raise DesignFailedError(f"margin must lie in (0, 0.5). Got: {margin}")
    grid = RadialGrid(r_max=r_max, nodes=nodes)
    depths = DESIGN_SCAN / width**2
    counts = np.array([_bound_count(grid, d, width) for d in depths])

    two = np.flatnonzero(counts >= 2)
    if two.size == 0:
        raise DesignFailedError(f"No depth up to {depths[-1]:.4g} binds two states at width {width}")
    first = int(two[0])
    low = _depth_edge(grid, width, depths[first - 1], depths[first], 2) if first > 0 else depths[0]
    three = np.flatnonzero(counts >= 3)
    if three.size:
        k = int(three[0])
        high = _depth_edge(grid, width, depths[k - 1], depths[k], 3)
    else:
        high = depths[-1]
    inner_low, inner_high = low * (1.0 + 1e-9), high * (1.0 - 1e-9)

    target = 0.5 * (1.0 + margin)

    def excess(depth: float) -> float:
        e = _lowest_levels(grid, depth, width)
        return (2.0 * e[1] - e[0]) / abs(e[0]) - target

    fallback = False
    if excess(inner_low) > 0 > excess(inner_high):
        depth = brentq(excess, inner_low, inner_high, xtol=1e-12 * high)
    else:
        depth, fallback = inner_high, True
        logger.warning(f"Margin target {target:.3f} not reached in the window; using depth {depth:.6g}")

    potential = Potential(depth=float(depth), width=width)
    e0, e1 = (float(v) for v in _lowest_levels(grid, depth, width)[:2])
    if not (e0 < 0 and e1 < 0):
        raise DesignFailedError(f"Designed depth {depth:.6g} does not bind two states")
    achieved = (2.0 * e1 - e0) / abs(e0)
    if 2.0 * e1 - e0 < margin * abs(e0):
        raise DesignFailedError(
            f"Margin {margin} not reachable at width {width}: best (2e1 - e0)/|e0| = {achieved:.4g}"
        )
    if math.sqrt(abs(e1)) * r_max < MIN_LOCALIZATION:
        raise DesignFailedError(
            f"Excited state not localized in the box: sqrt(|e1|) r_max = {math.sqrt(abs(e1)) * r_max:.3g}"
        )

    oracle_levels = continuum = None
    if oracle:
        levels = shooting_eigenvalues(potential, r_max, count=2, step=grid.dr / 2.0)
        oracle_levels = (float(levels[0]), float(levels[1]))
        limit = extrapolate_levels(assemble_hamiltonian(grid, potential))
        continuum = (float(limit[0]), float(limit[1]))

    design = PotentialDesign(
        potential=potential,
        e0=e0,
        e1=e1,
        margin=margin,
        achieved_margin=achieved,
        window=(float(low), float(high)),
        fallback=fallback,
        oracle=oracle_levels,
        continuum=continuum,
    )
    logger.info(
        f"Designed potential: depth={depth:.10g}, width={width:g}, e0={e0:.8g}, e1={e1:.8g}, "
        f"margin={achieved:.4f}"
        + (f", oracle mismatch={design.oracle_mismatch:.2e}" if oracle_levels else "")
    )
    return design


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabContext:
    """Linear data plus the branches needed by one experiment config."""

    grid: RadialGrid
    potential: Potential
    spectrum: LinearSpectrum
    design: Optional[PotentialDesign] = None
    resonance: Optional[ResonanceData] = None
    excited: Optional[BoundStateFamily] = None
    ground: Optional[BoundStateFamily] = None
    profiles: Optional[ProfileSet] = None  # at lam = 1; scale per run

    @property
    def gamma0(self) -> Optional[float]:
        return None if self.resonance is None else self.resonance.gamma0


def build_potential(config: ExperimentConfig) -> tuple[Potential, Optional[PotentialDesign]]:
    section = config.potential
    if section.auto_design:
        design = design_potential(section.width, section.margin, config.grid.r_max, config.grid.nodes, oracle=False)
        return design.potential, design
    if section.depth <= 0:
        raise DesignFailedError("potential.depth must be positive when auto_design is off")
    return Potential(depth=section.depth, width=section.width, form=section.form), None


def build_linear_context(
    config: ExperimentConfig,
    settings_obj: Settings = settings,
    with_resonance: bool = True,
) -> LabContext:
    """Grid, potential and spectrum, plus gamma0 and the unit-lam profiles when e_res is in the continuum."""
    grid = RadialGrid(r_max=config.grid.r_max, nodes=config.grid.nodes)
    potential, design = build_potential(config)
    spectrum = solve_bound_spectrum(assemble_hamiltonian(grid, potential))
    resonance = profiles = None
    if with_resonance and spectrum.resonant:
        resonance = fermi_constant(spectrum, extension=settings_obj.fgr_extension)
        profiles = compute_profiles(spectrum, 1, extension=settings_obj.fgr_extension)
    return LabContext(
        grid=grid, potential=potential, spectrum=spectrum, design=design, resonance=resonance, profiles=profiles
    )


def initial_size(config: ExperimentConfig) -> float:
    """Rough L2 size of the initial datum, used to size the branches."""
    initial = config.initial
    if initial.tag == "ground+noise":
        return math.hypot(initial.x0, initial.noise)
    if initial.tag == "excited+ground-seed":
        return abs(initial.y0) * math.hypot(1.0, initial.seed_ratio)
    if initial.tag == "dispersive-packet":
        return initial.packet_amplitude
    return math.hypot(initial.x0, initial.y0) + initial.noise


def branch_amplitudes(config: ExperimentConfig) -> np.ndarray:
    a_max = config.model.branch_max or max(BRANCH_HEADROOM * initial_size(config), 1e-3)
    return geometric_amplitudes(a_max, config.model.branch_samples)


def attach_families(context: LabContext, config: ExperimentConfig) -> LabContext:
    """Continue the excited branch and, unless the datum is a pure packet, the ground branch.

    The ground branch seeds ground+noise data and gives E_inf for the phase
    drift of runs that settle on a ground state.
    """
    amplitudes = branch_amplitudes(config)
    lam = config.model.lam
    excited = continue_excited_family(context.spectrum, lam, amplitudes)
    ground = None
    if config.initial.tag != "dispersive-packet":
        ground = continue_ground_family(context.spectrum, lam, amplitudes)
    return replace(context, excited=excited, ground=ground)


def build_context(config: ExperimentConfig, settings_obj: Settings = settings) -> LabContext:
    return attach_families(build_linear_context(config, settings_obj), config)


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialDatum:
    psi: RadialField
    alpha: float  # |x0| + |y0| + ||xi0||
    metadata: dict = field(default_factory=dict)


def smooth_noise(spectrum: LinearSpectrum, size: float, seed: int) -> RadialField:
    """P_c sum of random complex Gaussian bumps, scaled to L2 norm `size`."""
    grid = spectrum.grid
    if size == 0:
        return np.zeros(grid.nodes, dtype=complex)
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = rng.uniform(0.0, 0.25 * grid.r_max, NOISE_BUMPS)
    widths = rng.uniform(0.5, 2.0, NOISE_BUMPS)
    amplitudes = rng.normal(size=NOISE_BUMPS) + 1j * rng.normal(size=NOISE_BUMPS)
    r = grid.r[None, :]
    bumps = amplitudes[:, None] * np.exp(-(((r - centers[:, None]) / widths[:, None]) ** 2))
    noise = project_continuous(spectrum, bumps.sum(axis=0))
    return size * noise / grid.norm(noise)


def dispersive_packet(
    spectrum: LinearSpectrum, amplitude: float, center: float, width: float, wavenumber: float = 0.0
) -> RadialField:
    """P_c of a Gaussian-enveloped packet, scaled to L2 norm `amplitude`."""
    grid = spectrum.grid
    r = grid.r
    packet = np.exp(-(((r - center) / width) ** 2)) * np.exp(1j * wavenumber * r)
    packet = project_continuous(spectrum, packet)
    return amplitude * packet / grid.norm(packet)


def build_initial_data(context: LabContext, config: ExperimentConfig) -> InitialDatum:
    """psi0 for the configured tag, with alpha from its own decomposition."""
    spectrum = context.spectrum
    initial = config.initial
    metadata = {"initial": initial.tag}
    if initial.tag == "ground+noise":
        if context.ground is None:
            raise ValueError("ground+noise needs the ground branch in the context")
        psi = context.ground.profile(initial.x0) + smooth_noise(spectrum, initial.noise, config.seed)
        metadata.update({"x0": initial.x0, "noise": initial.noise, "rng": RNG_NAME, "seed": config.seed})
    elif initial.tag == "excited+ground-seed":
        psi = context.excited.profile(initial.y0) + initial.seed_ratio * initial.y0 * spectrum.phi0
        metadata.update({"y0": initial.y0, "seed_ratio": initial.seed_ratio})
    elif initial.tag == "dispersive-packet":
        psi = dispersive_packet(
            spectrum,
            initial.packet_amplitude,
            initial.packet_center,
            initial.packet_width,
            initial.packet_wavenumber,
        )
        metadata.update(
            {
                "packet_amplitude": initial.packet_amplitude,
                "packet_center": initial.packet_center,
                "packet_width": initial.packet_width,
                "packet_wavenumber": initial.packet_wavenumber,
            }
        )
    else:
        psi = (
            initial.x0 * spectrum.phi0
            + context.excited.profile(initial.y0)
            + smooth_noise(spectrum, initial.noise, config.seed)
        )
        metadata.update({"x0": initial.x0, "y0": initial.y0, "noise": initial.noise})
        if initial.noise > 0:
            metadata.update({"rng": RNG_NAME, "seed": config.seed})

    psi = np.asarray(psi, dtype=complex)
    d = decompose(spectrum, context.excited, psi)
    alpha = abs(d.x) + abs(d.y) + context.grid.norm(d.xi)
    metadata["alpha"] = alpha
    # Every builder yields exponentially localized data, inside the weighted class.
    metadata["weighted_class"] = "localized"
    return InitialDatum(psi=psi, alpha=alpha, metadata=metadata)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    record: TrajectoryRecord
    report: ClassificationReport
    paths: dict = field(default_factory=dict)


def default_dt(spectrum: LinearSpectrum) -> float:
    return 1e-3 / abs(spectrum.e0)


def choose_stepper(
    context: LabContext,
    config: ExperimentConfig,
    psi0: RadialField,
    dt: float,
    settings_obj: Settings = settings,
):
    """Linear backend for the run and the metadata explaining the choice."""
    spectrum = context.spectrum
    budget = reflection_budget(spectrum, psi0, config.model.lam)
    t_final = config.run.t_final
    mode = config.run.cap
    exceeds = t_final > budget
    if mode == "on":
        use_cap, reason = True, "requested"
    elif mode == "auto" and exceeds:
        use_cap, reason = True, f"T={t_final:g} exceeds reflection budget {budget:.4g}"
        logger.warning(f"Absorbing layer switched on: {reason}")
    else:
        use_cap, reason = False, "within reflection budget" if not exceeds else "off by config"
        if exceeds:
            logger.warning(f"T={t_final:g} exceeds the reflection budget {budget:.4g} with the CAP off")

    metadata = {"cap": use_cap, "cap_reason": reason, "reflection_budget": budget}
    if not use_cap:
        return create_stepper(StepperKind.EIGENBASIS, spectrum, dt), metadata
    strength = config.run.cap_strength * max(energy_cutoff(spectrum, psi0), abs(spectrum.e0))
    absorber = absorbing_potential(context.grid, strength, settings_obj.cap_ramp_fraction)
    metadata["cap_strength"] = strength
    return create_stepper(StepperKind.ABSORBING, spectrum, dt, absorber), metadata


def run_metadata(context: LabContext, config: ExperimentConfig, dt: float) -> dict:
    spectrum = context.spectrum
    return {
        "r_max": context.grid.r_max,
        "nodes": context.grid.nodes,
        "potential": context.potential.form,
        "depth": context.potential.depth,
        "width": context.potential.width,
        "lam": config.model.lam,
        "e0": spectrum.e0,
        "e1": spectrum.e1,
        "gamma0": context.gamma0,
        "dt": dt,
        "t_final": config.run.t_final,
    }


def run_profiles(context: LabContext, lam: int) -> Optional[ProfileSet]:
    """The context profiles rescaled to `lam`; None without profiles or with lam = 0."""
    if context.profiles is None or lam == 0:
        return None
    return context.profiles.scaled(lam / context.profiles.lam)


def run_phase_drift(
    context: LabContext, record: TrajectoryRecord, report: ClassificationReport
) -> Optional[PhaseDriftFit]:
    """omega(t) of the mode the run settles on, with E_inf from its branch at the late amplitude.

    Case III follows Theta on the excited branch. II_a and II_b follow arg x on
    the ground branch from t4 (t3 while t4 is beyond horizon). Other cases, or
    a missing branch, give None.
    """
    thresholds = report.thresholds
    if report.label == CaseLabel.EXCITED:
        family, phase = context.excited, np.array([d.theta for d in record.decompositions])
        modulus, start = float(record.abs_y[-1]), thresholds.t1
    elif report.label in (CaseLabel.GROUND_A, CaseLabel.GROUND_B):
        family = context.ground
        phase = np.unwrap(np.angle([d.x for d in record.decompositions]))
        modulus = float(record.abs_x[-1])
        start = thresholds.t4 if thresholds.t4 is not None else thresholds.t3
    else:
        return None
    if family is None or not np.isfinite(family.coefficient_2):
        report.notes.append(f"phase drift: no fitted branch for case {report.label.value}")
        return None
    try:
        fit = fit_phase_drift(record.times, phase, family.energy(modulus), (start, record.horizon))
    except FitWindowError as e:
        report.notes.append(f"phase drift: {e.user_message}")
        return None
    logger.info(
        f"Phase drift: E_inf={fit.frequency:.8g}, omega ~ {fit.log_slope:.3g} log t (r2={fit.log_r2:.3f}), "
        f"~ {fit.sqrt_slope:.3g} sqrt t (r2={fit.sqrt_r2:.3f})"
    )
    return fit


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[Path] = None,
    context: Optional[LabContext] = None,
    settings_obj: Settings = settings,
) -> ExperimentResult:
    """Build, propagate, classify and (with out_dir) write the artifacts.

    Writes trajectory.csv (metadata header plus the decomposition series),
    report.txt and fits.csv into out_dir.
    """
    if context is None:
        context = build_context(config, settings_obj)
    elif context.excited is None:
        context = attach_families(context, config)
    spectrum = context.spectrum
    datum = build_initial_data(context, config)
    dt = config.run.dt or default_dt(spectrum)
    stepper, cap_metadata = choose_stepper(context, config, datum.psi, dt, settings_obj)

    metadata = run_metadata(context, config, dt)
    metadata.update(datum.metadata)
    metadata.update(cap_metadata)
    params = config.classifier
    alpha = params.alpha if params.alpha is not None else datum.alpha
    params = params.model_copy(update={"alpha": alpha})

    propagator = Propagator(spectrum, config.model.lam, dt, stepper)
    record = evolve_and_record(
        propagator,
        context.excited,
        datum.psi,
        config.run.t_final,
        stride=config.run.stride,
        metadata=metadata,
        alpha=alpha,
        r1=params.r1,
        profiles=run_profiles(context, config.model.lam),
    )
    report = classify(TrajectorySeries.from_record(record), params, gamma0=context.gamma0)
    record.metadata["case"] = report.label.value
    report.phase_drift = run_phase_drift(context, record, report)
    if report.phase_drift is not None:
        record.metadata["e_inf"] = report.phase_drift.frequency
        for row, omega in zip(record.rows, report.phase_drift.omega):
            row["omega"] = float(omega)

    result = ExperimentResult(record=record, report=report)
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.paths = {
            "trajectory": write_trajectory(out_dir / "trajectory.csv", record),
            "report": write_text(
                out_dir / "report.txt",
                render_classification(report, {"initial": datum.metadata["initial"], "alpha": alpha}),
            ),
            "fits": write_frame(out_dir / "fits.csv", fits_frame(report)),
        }
    return result


# ---------------------------------------------------------------------------
# Free dispersive decay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreeDecay:
    times: np.ndarray
    l2loc: np.ndarray
    fit: Optional[DecayFit]
    extension: int = 1
    energy_max: float = 0.0


def free_decay(
    context: LabContext,
    config: ExperimentConfig,
    t_start: float = 10.0,
    t_end: float = 100.0,
    samples: int = 41,
) -> FreeDecay:
    """L2loc norm of exp(-itH0) P_c packet and its log-log slope on [t_start, t_end].

    The flow runs on a same-step extension of the working box, long enough
    that the fastest retained level cannot return to the origin before t_end.
    """
    initial = config.initial
    spectrum = context.spectrum
    packet = dispersive_packet(
        spectrum,
        max(initial.packet_amplitude, 1e-300),
        initial.packet_center,
        initial.packet_width,
        initial.packet_wavenumber,
    )
    energy_max = energy_cutoff(spectrum, packet, FREE_DECAY_MASS)
    speed = 2.0 * math.sqrt(energy_max)
    extension = max(1, math.ceil(t_end * speed / (2.0 * spectrum.grid.r_max)))
    box = build_continuum_box(spectrum, extension)
    logger.info(f"Free decay on r_max={box.grid.r_max:g} (x{extension}), levels up to E={energy_max:.4g}")

    times = np.geomspace(t_start, t_end, samples)
    r1 = config.classifier.r1
    flow = box.free_flow(box.embed(packet), times, energy_max)
    l2loc = np.array([local_norms(box.grid, row, r1).l2loc for row in flow])
    try:
        fit = fit_decay_exponent(times, l2loc, (t_start, t_end))
    except (FitWindowError, NonPositiveSeriesError) as e:
        logger.warning(f"Free decay fit failed: {e.user_message}")
        fit = None
    if fit is not None:
        logger.info(f"Free decay exponent: {fit.slope:.4f} [{fit.ci_low:.4f}, {fit.ci_high:.4f}]")
    return FreeDecay(times=times, l2loc=l2loc, fit=fit, extension=extension, energy_max=energy_max)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _shares_linear(axis: str) -> bool:
    return axis.split(".")[0] not in ("potential", "grid")


def _shares_families(axis: str) -> bool:
    return axis.split(".")[0] in ("run", "classifier", "seed")


def _summary_row(value, result: Optional[ExperimentResult], error: Optional[str]) -> dict:
    row = dict.fromkeys(SWEEP_COLUMNS)
    row["value"] = value
    row["error"] = error
    if result is None:
        row["case"] = "error"
        return row
    report = result.report
    row["case"] = report.label.value
    row["decay_slope"] = report.decay.slope if report.decay else None
    row["growth_ratio"] = report.growth.ratio if report.growth else None
    row["late_y_slope"] = report.late_y_decay.slope if report.late_y_decay else None
    if report.thresholds is not None:
        th = report.thresholds
        row.update({"t1": th.t1, "t2": th.t2, "t3": th.t3, "t4": th.t4, "n": th.n})
    return row


def sweep(
    config: ExperimentConfig,
    axis: str,
    values: Sequence[float],
    out_dir: Optional[Path] = None,
    threads: int = 1,
    settings_obj: Settings = settings,
    context: Optional[LabContext] = None,
) -> pd.DataFrame:
    """One run per value of `axis`, executed concurrently; summary in submission order.

    Per-run failures are logged and recorded in the `error` column; the sweep
    carries on. Writes summary.csv and one run_<k> directory per value when
    out_dir is given. A prebuilt `context` replaces the shared linear context
    for axes that leave the potential and the grid alone.
    """
    values = list(values)
    if not values:
        frame = pd.DataFrame(columns=SWEEP_COLUMNS)
        if out_dir is not None:
            write_frame(Path(out_dir) / "summary.csv", frame, {"axis": axis})
        return frame
    config.with_field(axis, values[0])  # unknown axis fails before any work

    base = None
    if _shares_linear(axis):
        base = context or build_linear_context(config, settings_obj)
        if _shares_families(axis) and base.excited is None:
            base = attach_families(base, config)

    def run_one(k: int, value) -> dict:
        try:
            run_config = config.with_field(axis, value)
            if base is None:
                context = build_context(run_config, settings_obj)
            elif _shares_families(axis):
                context = base
            else:
                context = attach_families(base, run_config)
            run_dir = None if out_dir is None else Path(out_dir) / f"run_{k:03d}"
            result = run_experiment(run_config, run_dir, context, settings_obj)
            return _summary_row(value, result, None)
        except (LabError, ValidationError, ValueError) as e:
            message = e.user_message if isinstance(e, LabError) else str(e)
            logger.error(f"Sweep run {axis}={value} failed: {message}", exc_info=True)
            return _summary_row(value, None, message)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(run_one, k, value) for k, value in enumerate(values)]
        rows = [future.result() for future in futures]

    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    logger.info(f"Sweep over {axis}: {len(values)} runs, cases {frame['case'].tolist()}")
    if out_dir is not None:
        write_frame(Path(out_dir) / "summary.csv", frame, {"axis": axis})
    return frame
