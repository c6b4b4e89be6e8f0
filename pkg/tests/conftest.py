"""
Shared pytest configuration and fixtures.

IMPORTANT: This module sets environment defaults BEFORE any `app.*` module is
imported. `app/config.py` calls `load_settings()` at import time, so pytest
must see a sane LOG_LEVEL / DATA_DIR even on a machine with a stray `.env`.

The numerical fixtures are session scoped: the designed well, its spectrum,
both branches, gamma0 and the resolvent profiles are built once on a modest
grid (r_max = 30, N = 749, dr = 0.04) and shared read-only by every test.
"""

import os
import tempfile

# Use setdefault so a real environment (or exported vars) still wins.
os.environ.setdefault("LOG_LEVEL", "INFO")
os.environ.setdefault("DATA_DIR", os.path.join(tempfile.gettempdir(), "nls-lab-tests"))

import pytest

from tests.helpers import TEST_EXTENSION, TEST_NODES, TEST_R_MAX


def pytest_addoption(parser):
    """Register the --run-slow flag that opts in to long PDE runs."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run slow tests (long PDE runs, reference fixtures, resolution checks).",
    )


def pytest_collection_modifyitems(config, items):
    """Skip slow-marked tests unless --run-slow is given."""
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow (minutes of propagation)")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def design():
    from app.services.experiment import design_potential

    return design_potential(1.0, 0.1, TEST_R_MAX, TEST_NODES, oracle=False)


@pytest.fixture(scope="session")
def grid():
    from app.services.grid_spectral import RadialGrid

    return RadialGrid(r_max=TEST_R_MAX, nodes=TEST_NODES)


@pytest.fixture(scope="session")
def spectrum(grid, design):
    from app.services.grid_spectral import assemble_hamiltonian, solve_bound_spectrum

    return solve_bound_spectrum(assemble_hamiltonian(grid, design.potential))


@pytest.fixture(scope="session")
def amplitudes():
    from app.services.bound_states import geometric_amplitudes

    return geometric_amplitudes(0.3, 9)


@pytest.fixture(scope="session")
def excited(spectrum, amplitudes):
    from app.services.bound_states import continue_excited_family

    return continue_excited_family(spectrum, 1, amplitudes)


@pytest.fixture(scope="session")
def ground(spectrum, amplitudes):
    from app.services.bound_states import continue_ground_family

    return continue_ground_family(spectrum, 1, amplitudes)


@pytest.fixture(scope="session")
def resonance(spectrum):
    from app.services.grid_spectral import fermi_constant

    return fermi_constant(spectrum, extension=TEST_EXTENSION, check_agreement=False, sample_window=False)


@pytest.fixture(scope="session")
def profiles(spectrum):
    from app.services.normal_form import compute_profiles

    return compute_profiles(spectrum, 1, extension=TEST_EXTENSION)


@pytest.fixture
def small_config():
    """ExperimentConfig on the test grid (auto-designed well)."""
    from app.config import ExperimentConfig

    return ExperimentConfig(
        grid={"r_max": TEST_R_MAX, "nodes": TEST_NODES},
        initial={"tag": "excited+ground-seed", "y0": 0.1, "seed_ratio": 0.1},
        run={"t_final": 0.0, "cap": "off"},
    )
