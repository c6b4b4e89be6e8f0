"""
NLS Trichotomy Lab - command-line entry point.

Runs the numerical laboratory for the radial cubic Schroedinger equation with
a two-bound-state potential: designs the well, computes linear and nonlinear
bound states and the resonance constant, propagates and classifies
trajectories, sweeps initial data and checks the time-integral inequalities.

Usage:
    python -m app.main <verb> [--config PATH] [--out DIR] [--seed U64] [--threads N]
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config import ExperimentConfig, load_experiment, settings
from app.errors import EXIT_CONFIG, EXIT_GENERIC, LabError
from app.services.bound_states import continue_excited_family, continue_ground_family
from app.services.classifier import ODE_GROWTH_BAND, GrowthWindowError, classify, fit_growth_rate
from app.services.experiment import (
    branch_amplitudes,
    build_linear_context,
    design_potential,
    free_decay,
    run_experiment,
    sweep,
)
from app.services.inequalities import verify_integral_inequalities
from app.services.normal_form import integrate_radial_nf, pin_mu, predict_relaxation
from app.services.report import fits_frame, render_classification, render_sections, write_text
from app.services.storage import read_trajectory, series_from_frame, write_branch, write_frame

# Configure logging (re-levelled from LOG_LEVEL in main())
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)

logger = logging.getLogger(__name__)

VERBS = (
    "design-potential",
    "spectrum",
    "families",
    "gamma0",
    "evolve",
    "classify",
    "sweep",
    "verify-inequalities",
    "free-decay",
    "normal-form",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app.main", description=__doc__.split("\n\n")[0].strip())
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment TOML file")
    common.add_argument("--out", type=Path, help="Output directory (default: DATA_DIR/<verb>)")
    common.add_argument("--seed", type=int, help="Unsigned 64-bit seed for stochastic initial data")
    common.add_argument("--threads", type=int, help="Concurrent sweep runs (default: SWEEP_THREADS)")

    verbs = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        sub = verbs.add_parser(verb, parents=[common])
        if verb == "classify":
            sub.add_argument("--input", type=Path, required=True, help="Trajectory CSV written by evolve")
        elif verb == "sweep":
            sub.add_argument("--axis", required=True, help="Dotted config field, e.g. initial.seed_ratio")
            sub.add_argument("--values", default="", help="Comma-separated values")
        elif verb == "verify-inequalities":
            sub.add_argument("--samples", type=int, default=1000, help="Random samples per inequality")
        elif verb == "normal-form":
            sub.add_argument("--mu0", type=float, help="Initial |mu| (default: seed_ratio * y0)")
            sub.add_argument("--nu0", type=float, help="Initial |nu| (default: y0)")
            sub.add_argument("--gamma0", type=float, help="Resonance constant (default: computed)")
            sub.add_argument("--pin-mu", action="store_true", help="Freeze |mu| at its initial value")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_experiment(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = config.with_field("seed", args.seed)
    elif "seed" not in config.model_fields_set:
        config = config.with_field("seed", settings.default_seed)
    return config


def parse_values(text: str) -> list:
    values = []
    for item in text.split(","):
        item = item.strip()
        if item:
            try:
                values.append(int(item))
            except ValueError:
                values.append(float(item))
    return values


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def cmd_design_potential(config: ExperimentConfig, out: Path, args) -> int:
    design = design_potential(config.potential.width, config.potential.margin, config.grid.r_max, config.grid.nodes)
    items = {
        "form": design.potential.form,
        "depth": design.potential.depth,
        "width": design.potential.width,
        "e0": design.e0,
        "e1": design.e1,
        "margin": design.margin,
        "achieved_margin": design.achieved_margin,
        "window": design.window,
        "fallback": design.fallback,
        "continuum_e0": design.continuum[0] if design.continuum else None,
        "continuum_e1": design.continuum[1] if design.continuum else None,
        "oracle_e0": design.oracle[0] if design.oracle else None,
        "oracle_e1": design.oracle[1] if design.oracle else None,
        "oracle_mismatch": design.oracle_mismatch,
    }
    write_text(out / "design.txt", render_sections([("design", items)]))
    write_frame(out / "design.csv", pd.DataFrame([items]).drop(columns=["window"]))
    return 0


def cmd_spectrum(config: ExperimentConfig, out: Path, args) -> int:
    context = build_linear_context(config, with_resonance=False)
    spectrum = context.spectrum
    write_frame(
        out / "eigenvalues.csv",
        pd.DataFrame({"k": np.arange(spectrum.energies.size), "energy": spectrum.energies}),
    )
    write_frame(
        out / "bound_states.csv",
        pd.DataFrame({"r": context.grid.r, "phi0": spectrum.phi0, "phi1": spectrum.phi1}),
    )
    items = {
        "nodes": context.grid.nodes,
        "r_max": context.grid.r_max,
        "dr": context.grid.dr,
        "depth": context.potential.depth,
        "width": context.potential.width,
        "e0": spectrum.e0,
        "e1": spectrum.e1,
        "continuum_e0": spectrum.continuum_levels[0],
        "continuum_e1": spectrum.continuum_levels[1],
        "e_res": spectrum.e_res,
        "resonant": spectrum.resonant,
        "eigen_residual": spectrum.eigen_residual,
    }
    write_text(out / "spectrum.txt", render_sections([("spectrum", items)]))
    return 0


def cmd_families(config: ExperimentConfig, out: Path, args) -> int:
    context = build_linear_context(config, with_resonance=False)
    amplitudes = branch_amplitudes(config)
    sections = []
    for family in (
        continue_ground_family(context.spectrum, config.model.lam, amplitudes),
        continue_excited_family(context.spectrum, config.model.lam, amplitudes),
    ):
        write_branch(out / f"{family.branch}_branch.csv", family)
        items = {
            "samples": family.amplitudes.size,
            "max_amplitude": family.max_amplitude,
            "linear_energy": family.linear_energy,
            "E2": family.coefficient_2,
            "E4": family.coefficient_4,
            "perturbative_E2": family.perturbation_coefficient,
            "max_residual": float(np.max(family.residuals)),
            "max_correction_ratio": float(np.max(family.correction_ratios)),
        }
        if family.derivatives is not None:
            items["max_derivative_mismatch"] = float(np.max(family.derivatives.mismatch))
            items["min_lam_c1"] = float(np.min(family.lam * family.derivatives.c1))
        sections.append((f"{family.branch} branch", items))
    write_text(out / "families.txt", render_sections(sections))
    return 0


def cmd_gamma0(config: ExperimentConfig, out: Path, args) -> int:
    context = build_linear_context(config)
    resonance = context.resonance
    if resonance is None:
        raise LabError("e_res lies outside the continuous spectrum; gamma0 is undefined")
    write_frame(
        out / "gamma0_ladder.csv",
        pd.DataFrame(
            {
                "sigma": resonance.sigmas,
                "lorentzian": resonance.lorentzian_values,
                "density": resonance.density_values,
            }
        ),
    )
    if resonance.window_s:
        write_frame(out / "gamma0_window.csv", pd.DataFrame({"s": resonance.window_s, "gamma": resonance.window_gamma}))
    profiles = context.profiles.scaled(config.model.lam)
    write_frame(
        out / "profiles.csv",
        pd.DataFrame(
            {
                "r": context.grid.r,
                "re_phi1": np.real(profiles.phi1),
                "im_phi1": np.imag(profiles.phi1),
                "phi2": profiles.phi2,
                "phi3": profiles.phi3,
                "phi4": profiles.phi4,
                "phi5": profiles.phi5,
            }
        ),
    )
    spectrum = context.spectrum
    source = spectrum.phi0 * spectrum.phi1**2
    imag_pairing = float(np.imag(context.grid.inner(source, profiles.phi1)))
    items = {
        "gamma0": resonance.gamma0,
        "gamma0_lorentzian": resonance.gamma0_lorentzian,
        "gamma0_density": resonance.gamma0_density,
        "relative_disagreement": resonance.relative_disagreement,
        "clamped": resonance.clamped,
        "level_spacing": resonance.level_spacing,
        "extension": resonance.extension,
        "window_passed": resonance.window_passed,
        "im_pairing_phi1": imag_pairing,
        **{f"residual_{name}": value for name, value in profiles.residuals.items()},
        "max_phi1_ladder_residual": max(profiles.phi1_residuals, default=0.0),
    }
    write_text(out / "gamma0.txt", render_sections([("resonance", items)]))
    return 0


def cmd_evolve(config: ExperimentConfig, out: Path, args) -> int:
    run_experiment(config, out)
    return 0


def cmd_classify(config: ExperimentConfig, out: Path, args) -> int:
    metadata, frame = read_trajectory(args.input)
    params = config.classifier
    if params.alpha is None and metadata.get("alpha") is not None:
        params = params.model_copy(update={"alpha": float(metadata["alpha"])})
    report = classify(series_from_frame(frame), params, gamma0=metadata.get("gamma0"))
    write_text(out / "report.txt", render_classification(report, {"input": str(args.input)}))
    write_frame(out / "fits.csv", fits_frame(report))
    return 0


def cmd_sweep(config: ExperimentConfig, out: Path, args) -> int:
    threads = args.threads or settings.sweep_threads
    frame = sweep(config, args.axis, parse_values(args.values), out, threads)
    return 0 if frame.empty or (frame["case"] != "error").all() else EXIT_GENERIC


def cmd_verify_inequalities(config: ExperimentConfig, out: Path, args) -> int:
    results = verify_integral_inequalities(args.samples, seed=config.seed)
    frame = pd.DataFrame(
        {
            "name": [r.name for r in results],
            "constant": [r.constant for r in results],
            "constant_doubled": [r.constant_doubled for r in results],
            "samples": [r.samples for r in results],
            "passed": [r.passed for r in results],
        }
    )
    write_frame(out / "inequalities.csv", frame)
    sections = [(r.name, {"constant": r.constant, "doubled": r.constant_doubled, "passed": r.passed}) for r in results]
    write_text(out / "inequalities.txt", render_sections(sections))
    if not all(r.passed for r in results):
        logger.warning("At least one integral inequality constant is unstable under doubling")
        return EXIT_GENERIC
    return 0


def cmd_free_decay(config: ExperimentConfig, out: Path, args) -> int:
    context = build_linear_context(config, with_resonance=False)
    result = free_decay(context, config)
    write_frame(out / "free_decay.csv", pd.DataFrame({"t": result.times, "l2loc": result.l2loc}))
    items = {"slope": None, "ci_low": None, "ci_high": None}
    if result.fit is not None:
        items = {"slope": result.fit.slope, "ci_low": result.fit.ci_low, "ci_high": result.fit.ci_high}
    items.update({"extension": result.extension, "energy_max": result.energy_max})
    write_text(out / "free_decay.txt", render_sections([("free decay", items)]))
    return 0


def cmd_normal_form(config: ExperimentConfig, out: Path, args) -> int:
    initial = config.initial
    nu0 = args.nu0 if args.nu0 is not None else initial.y0
    mu0 = args.mu0 if args.mu0 is not None else initial.seed_ratio * initial.y0
    gamma0 = args.gamma0
    if gamma0 is None:
        resonance = build_linear_context(config).resonance
        if resonance is None:
            raise LabError("e_res lies outside the continuous spectrum; pass --gamma0")
        gamma0 = resonance.gamma0
    forcing = pin_mu(gamma0) if args.pin_mu else None
    series = integrate_radial_nf(mu0, nu0, gamma0, config.run.t_final, forcing=forcing)
    data = {"t": series.t, "mu": series.mu, "nu": series.nu}
    items = {
        "mu0": mu0,
        "nu0": nu0,
        "gamma0": gamma0,
        "pinned": args.pin_mu,
        "clipped": series.clipped,
        "invariant_drift": series.invariant_drift,
    }
    if mu0 > 0 and nu0 > 0:
        prediction = predict_relaxation(mu0, nu0, gamma0)
        data.update({"lower": prediction.lower(series.t), "upper": prediction.upper(series.t)})
        items.update(
            {
                "mu_inf": prediction.mu_inf,
                "asymptotic_coefficient": prediction.asymptotic_coefficient,
                "crossover_time": prediction.crossover_time,
                "efold_time": prediction.efold_time,
            }
        )
        # Growth is read while |nu| is still within 5% of nu0.
        drop = np.flatnonzero(series.nu < 0.95 * nu0)
        end = series.t[drop[0]] if drop.size else series.t[-1]
        try:
            growth = fit_growth_rate(series.t, series.mu, (0.0, end), gamma0, nu0, ODE_GROWTH_BAND)
            items.update({"growth_ratio": growth.ratio, "growth_passed": growth.passed})
        except GrowthWindowError as e:
            items["growth_fit"] = e.user_message
    write_frame(out / "normal_form.csv", pd.DataFrame(data))
    write_text(out / "normal_form.txt", render_sections([("normal form", items)]))
    return 0


COMMANDS = {
    "design-potential": cmd_design_potential,
    "spectrum": cmd_spectrum,
    "families": cmd_families,
    "gamma0": cmd_gamma0,
    "evolve": cmd_evolve,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "verify-inequalities": cmd_verify_inequalities,
    "free-decay": cmd_free_decay,
    "normal-form": cmd_normal_form,
}


def main(argv: Optional[list] = None) -> int:
    """Parse arguments, run one verb and map failures to exit codes."""
    args = build_parser().parse_args(argv)

    # Configure logging level from settings
    logging.getLogger().setLevel(getattr(logging, settings.log_level))

    try:
        config = load_config(args)
    except ValidationError as e:
        logger.error("=" * 60)
        logger.error("EXPERIMENT CONFIGURATION ERROR")
        logger.error("=" * 60)
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"]) or "unknown"
            logger.error(f"  {location}: {error['msg']}")
        logger.error("=" * 60)
        return EXIT_CONFIG
    except (FileNotFoundError, KeyError) as e:
        logger.error(f"Could not load experiment config: {e}")
        return EXIT_CONFIG

    out = args.out or settings.get_output_dir(args.verb)
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running {args.verb}, output directory: {out}")

    try:
        code = COMMANDS[args.verb](config, out, args)
    except ValidationError as e:
        logger.error(f"Invalid parameter for {args.verb}: {e}")
        return EXIT_CONFIG
    except KeyError as e:
        logger.error(f"Unknown config field for {args.verb}: {e}")
        return EXIT_CONFIG
    except LabError as e:
        logger.error(f"{args.verb} failed: {e.user_message}", exc_info=logger.isEnabledFor(logging.DEBUG))
        return e.exit_code
    logger.info(f"{args.verb} complete (exit code {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
