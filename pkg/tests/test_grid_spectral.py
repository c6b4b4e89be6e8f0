"""Tests for the radial grid, H0 and its linear spectral toolkit."""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal

from app.errors import GridMismatchError
from app.services.grid_spectral import (
    AssumptionViolationError,
    InvalidPotentialError,
    Potential,
    RadialGrid,
    SingularResolventError,
    absorbing_potential,
    apply_free_flow,
    assemble_hamiltonian,
    build_continuum_box,
    extrapolate_levels,
    fermi_constant,
    project_continuous,
    reflection_budget,
    resolvent_apply,
    resolvent_solve,
    richardson,
    solve_bound_spectrum,
)
from app.services.shooting import shooting_eigenvalues
from tests.helpers import TEST_NODES, random_field


def test_grid_nodes_and_step():
    """r_i = i dr with dr = r_max/(N+1)."""
    grid = RadialGrid(r_max=10.0, nodes=9)
    assert grid.dr == pytest.approx(1.0)
    np.testing.assert_allclose(grid.r, np.arange(1.0, 10.0))


def test_grid_rejects_degenerate_sizes():
    """A box needs a positive radius and at least two nodes."""
    with pytest.raises(ValueError):
        RadialGrid(r_max=0.0, nodes=10)
    with pytest.raises(ValueError):
        RadialGrid(r_max=1.0, nodes=1)


def test_weights_integrate_ball_volume():
    """sum 4 pi r^2 dr approximates the volume of the ball."""
    grid = RadialGrid(r_max=10.0, nodes=999)
    volume = 4.0 / 3.0 * math.pi * 10.0**3
    assert abs(float(np.real(grid.integrate(np.ones(grid.nodes)))) - volume) / volume < 1e-2


def test_extended_grid_keeps_step():
    """The continuum box has the same dr on a longer interval."""
    grid = RadialGrid(r_max=30.0, nodes=TEST_NODES)
    longer = grid.extended(4)
    assert longer.dr == pytest.approx(grid.dr)
    assert longer.r_max == pytest.approx(120.0)
    np.testing.assert_allclose(longer.r[: grid.nodes], grid.r)


def test_non_finite_potential_rejected(grid):
    """A tabulated potential with NaN entries is refused."""
    bad = Potential(depth=1.0, width=1.0, values=np.full(grid.nodes, np.nan), value_nodes=grid.r)
    with pytest.raises(InvalidPotentialError):
        assemble_hamiltonian(grid, bad)


def test_unknown_form_rejected(grid):
    """Only the Gaussian well has an analytic form."""
    with pytest.raises(InvalidPotentialError):
        assemble_hamiltonian(grid, Potential(depth=1.0, width=1.0, form="square"))


def test_shallow_well_violates_two_state_assumption(grid):
    """A well too shallow for two bound states raises."""
    with pytest.raises(AssumptionViolationError):
        solve_bound_spectrum(assemble_hamiltonian(grid, Potential(depth=0.5, width=1.0)))


def test_free_potential_has_no_bound_state():
    """V = 0 on a large box: no negative eigenvalue, so the two-state check fails."""
    grid = RadialGrid(r_max=40.0, nodes=1000)
    hamiltonian = assemble_hamiltonian(grid, Potential(depth=0.0, width=1.0))
    energies = eigh_tridiagonal(hamiltonian.diagonal, hamiltonian.off_diagonal, eigvals_only=True)
    assert np.all(energies >= 0)
    with pytest.raises(AssumptionViolationError):
        solve_bound_spectrum(hamiltonian)


def test_designed_spectrum_structure(spectrum):
    """Two negative levels, the resonance in the continuum, small eigen residual."""
    assert spectrum.e0 < spectrum.e1 < 0
    assert spectrum.energies[2] > 0
    assert spectrum.resonant
    assert spectrum.e_res > 0
    assert spectrum.eigen_residual < 1e-8 * np.max(np.abs(spectrum.energies))


def test_bound_states_orthonormal_and_oriented(spectrum):
    """phi0, phi1 are orthonormal in the radial measure and positive at r_1."""
    grid = spectrum.grid
    assert grid.inner(spectrum.phi0, spectrum.phi0) == pytest.approx(1.0, abs=1e-12)
    assert grid.inner(spectrum.phi1, spectrum.phi1) == pytest.approx(1.0, abs=1e-12)
    assert abs(grid.inner(spectrum.phi0, spectrum.phi1)) < 1e-12
    assert spectrum.phi0[0] > 0 and spectrum.phi1[0] > 0


def test_spectrum_matches_shooting_oracle(spectrum, design):
    """The dr -> 0 finite-difference levels match Numerov shooting to 1e-6."""
    oracle = shooting_eigenvalues(design.potential, spectrum.grid.r_max, count=2, step=spectrum.grid.dr / 2)
    np.testing.assert_allclose(spectrum.continuum_levels, oracle, rtol=1e-6)


def test_discrete_levels_converge_at_second_order(spectrum, design):
    """Halving dr cuts the level error by four; the extrapolated levels stay put."""
    half_step = RadialGrid(r_max=spectrum.grid.r_max, nodes=2 * (spectrum.grid.nodes + 1) - 1)
    finer = solve_bound_spectrum(assemble_hamiltonian(half_step, design.potential))
    limit = spectrum.continuum_levels
    coarse_error = spectrum.energies[:2] - limit
    fine_error = finer.energies[:2] - limit
    ratios = coarse_error / fine_error
    assert np.all((ratios > 3.6) & (ratios < 4.4))
    np.testing.assert_allclose(finer.continuum_levels, limit, rtol=1e-7)


def test_unrefined_spectrum_skips_extrapolation(grid, design):
    """refine=False leaves continuum_levels unset."""
    plain = solve_bound_spectrum(assemble_hamiltonian(grid, design.potential), refine=False)
    assert plain.continuum_levels is None


def test_extrapolate_levels_needs_a_halving(spectrum):
    with pytest.raises(ValueError):
        extrapolate_levels(spectrum.hamiltonian, halvings=0)


@hyp_settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_projection_idempotent_and_orthogonal(spectrum, seed):
    """P_c P_c f = P_c f and P_c f is orthogonal to both bound states."""
    f = random_field(spectrum.grid.nodes, seed)
    once = project_continuous(spectrum, f)
    twice = project_continuous(spectrum, once)
    grid = spectrum.grid
    assert grid.norm(twice - once) <= 1e-12 * max(grid.norm(f), 1.0)
    assert abs(grid.inner(spectrum.phi0, once)) <= 1e-12 * grid.norm(f)
    assert abs(grid.inner(spectrum.phi1, once)) <= 1e-12 * grid.norm(f)


def test_projection_self_adjoint(spectrum):
    """<P_c f, g> = <f, P_c g>."""
    grid = spectrum.grid
    f = random_field(grid.nodes, 11)
    g = random_field(grid.nodes, 12)
    left = grid.inner(project_continuous(spectrum, f), g)
    right = grid.inner(f, project_continuous(spectrum, g))
    assert abs(left - right) <= 1e-12 * grid.norm(f) * grid.norm(g)


def test_projection_rejects_other_grid(spectrum):
    """Fields from another grid are refused."""
    with pytest.raises(GridMismatchError):
        project_continuous(spectrum, np.zeros(spectrum.grid.nodes + 1))


def test_free_flow_on_bound_state_is_a_phase(spectrum):
    """exp(-itH0) phi0 = exp(-i e0 t) phi0."""
    t = 3.7
    evolved = apply_free_flow(spectrum, spectrum.phi0, t)
    expected = np.exp(-1j * spectrum.e0 * t) * spectrum.phi0
    assert spectrum.grid.norm(evolved - expected) < 1e-10


def test_free_flow_is_unitary(spectrum):
    """The linear flow preserves the L2 norm."""
    f = random_field(spectrum.grid.nodes, 3)
    evolved = apply_free_flow(spectrum, f, 12.5)
    assert spectrum.grid.norm(evolved) == pytest.approx(spectrum.grid.norm(f), rel=1e-12)


@pytest.mark.parametrize("s,t", [(1.5, 2.25), (-4.0, 10.0), (0.3, -0.3)])
def test_free_flow_group_property(spectrum, s, t):
    """exp(-isH0) exp(-itH0) f = exp(-i(s+t)H0) f."""
    f = random_field(spectrum.grid.nodes, 8)
    composed = apply_free_flow(spectrum, apply_free_flow(spectrum, f, t), s)
    direct = apply_free_flow(spectrum, f, s + t)
    assert spectrum.grid.norm(composed - direct) <= 1e-10 * spectrum.grid.norm(f)


def test_box_free_flow_matches_eigenbasis_flow(spectrum):
    """Without extension or cutoff the box flow is exp(-itH0) P_c."""
    box = build_continuum_box(spectrum, 1)
    f = random_field(spectrum.grid.nodes, 10)
    times = [0.0, 2.5, 40.0]
    rows = box.free_flow(f, times, energy_max=10.0 * spectrum.energies[-1])
    for t, row in zip(times, rows):
        expected = apply_free_flow(spectrum, project_continuous(spectrum, f), t)
        assert spectrum.grid.norm(row - expected) <= 1e-10 * spectrum.grid.norm(f)


def test_free_flow_at_zero_is_a_copy(spectrum):
    """t = 0 returns an independent copy of f."""
    f = random_field(spectrum.grid.nodes, 4)
    out = apply_free_flow(spectrum, f, 0.0)
    np.testing.assert_array_equal(out, f)
    assert out is not f


def test_resolvent_eigen_division_matches_banded_solve(spectrum):
    """Both resolvent routes agree off the real axis."""
    f = project_continuous(spectrum, random_field(spectrum.grid.nodes, 5))
    z = spectrum.e_res + 0.1j
    by_division = resolvent_apply(spectrum, z, f)
    by_solve = resolvent_solve(spectrum.hamiltonian, z, f)
    assert spectrum.grid.norm(by_division - by_solve) <= 1e-8 * spectrum.grid.norm(by_solve)


@pytest.mark.parametrize("z", [0.3 + 0.05j, -0.2 + 0.5j, 2.0 - 0.01j])
def test_continuous_resolvent_inverts_on_range(spectrum, z):
    """(H0 - z) R_c(z) f = P_c f for any f."""
    grid = spectrum.grid
    f = random_field(grid.nodes, 9)
    u = resolvent_apply(spectrum, z, f, continuous_only=True)
    residual = spectrum.hamiltonian.apply(u) - z * u - project_continuous(spectrum, f)
    assert grid.norm(residual) <= 1e-9 * grid.norm(f)


def test_resolvent_singular_at_bound_energy(spectrum):
    """A real z on a retained eigenvalue is refused."""
    f = project_continuous(spectrum, random_field(spectrum.grid.nodes, 6))
    with pytest.raises(SingularResolventError):
        resolvent_apply(spectrum, spectrum.e0, f)


def test_continuous_only_resolvent_at_bound_energy(spectrum):
    """Dropping the bound components makes z = e0 admissible."""
    f = project_continuous(spectrum, random_field(spectrum.grid.nodes, 7))
    u = resolvent_apply(spectrum, spectrum.e0, f, continuous_only=True)
    residual = spectrum.hamiltonian.apply(u) - spectrum.e0 * u - f
    assert spectrum.grid.norm(residual) <= 1e-8 * spectrum.grid.norm(f)


def test_richardson_recovers_constant_term():
    """Exact on data that follow the assumed polynomial in sigma."""
    sigmas = np.array([4.0, 2.0, 1.0, 0.5])
    values = 2.0 + 3.0 * sigmas - 0.5 * sigmas**2
    assert np.real(richardson(sigmas, values, (1, 2))) == pytest.approx(2.0, abs=1e-12)


def test_gamma0_nonnegative(resonance):
    """The resonance constant is never negative."""
    assert resonance.gamma0 >= 0
    assert len(resonance.sigmas) == 4
    assert resonance.level_spacing > 0


def test_gamma0_zero_source(spectrum):
    """A vanishing source gives gamma0 = 0."""
    data = fermi_constant(spectrum, source=np.zeros(spectrum.grid.nodes), extension=2)
    assert data.gamma0 == 0.0


@pytest.mark.slow
def test_gamma0_estimators_agree_at_two_resolutions(design):
    """Lorentzian and spectral-density estimates agree within 5% on two grids."""
    for nodes in (1499, 2999):
        grid = RadialGrid(r_max=30.0, nodes=nodes)
        spectrum = solve_bound_spectrum(assemble_hamiltonian(grid, design.potential))
        data = fermi_constant(spectrum, extension=16)
        assert data.relative_disagreement <= 0.05
        assert data.window_passed is not None


def test_reflection_budget_uses_resonant_energy(spectrum):
    """With the nonlinearity on, radiation at e_res bounds the budget."""
    zero = np.zeros(spectrum.grid.nodes)
    expected = spectrum.grid.r_max / (4.0 * math.sqrt(spectrum.e_res))
    assert reflection_budget(spectrum, zero, 1) == pytest.approx(expected)
    assert reflection_budget(spectrum, zero, 0) == math.inf


def test_absorbing_potential_shape(grid):
    """W vanishes inside, is nonnegative and grows quartically in the ramp."""
    w = absorbing_potential(grid, strength=3.0, ramp_fraction=0.2)
    assert np.all(w >= 0)
    assert np.all(w[grid.r <= 0.8 * grid.r_max] == 0)
    r_c = 0.8 * grid.r_max
    expected = 3.0 * ((grid.r[-1] - r_c) / (grid.r_max - r_c)) ** 4
    assert w[-1] == pytest.approx(expected)
