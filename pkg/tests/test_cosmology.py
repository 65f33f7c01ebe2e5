import math

import numpy as np
import pytest

from hyperflow.cosmology import (
    EDS_RDOT,
    FOUR_PI_THIRDS,
    BackgroundCurve,
    CollapseError,
    EosModel,
    background_acceleration,
    cosmo_system,
    einstein_de_sitter,
    integrate_background,
)
from hyperflow.norms import integer_hm_norm
from hyperflow.solver import check_symmetry_positivity, solve, weighted_energy
from hyperflow.spectral import Grid, RealField, random_band_limited


def test_background_acceleration():
    assert background_acceleration(1.0) + 4 * math.pi / 3 == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("R0,Rdot0", [(1.0, EDS_RDOT), (1.0, 0.0), (2.0, 1.0), (0.5, 5.0)])
def test_first_integral(R0, Rdot0):
    states = integrate_background(R0, Rdot0, T=0.5 if Rdot0 == 0 else 1.0, dt=1e-4)
    e = np.array([s.energy for s in states])
    assert np.max(np.abs(e - e[0])) < 1e-10
    assert all(s.rho_hat * s.R**3 == pytest.approx(1.0, rel=1e-15) for s in states)


def test_einstein_de_sitter_closed_form():
    states = integrate_background(1.0, EDS_RDOT, T=1.0, dt=1e-3)
    last = states[-1]
    exact = einstein_de_sitter(1.0)
    assert last.R == pytest.approx(exact.R, rel=1e-10)
    assert last.Rdot == pytest.approx(exact.Rdot, rel=1e-10)


def test_collapse_and_decreasing_radius():
    states = integrate_background(1.0, 0.0, T=0.5, dt=1e-3)
    R = np.array([s.R for s in states])
    assert np.all(np.diff(R) < 0)
    with pytest.raises(CollapseError):
        integrate_background(1.0, 0.0, T=1.0, dt=1e-3)
    with pytest.raises(ValueError):
        integrate_background(-1.0)


def test_background_curve_interpolates():
    states = integrate_background(1.0, EDS_RDOT, T=0.5, dt=1e-3)
    curve = BackgroundCurve(states)
    exact = einstein_de_sitter(0.255)
    np.testing.assert_allclose(curve(0.255), [exact.R, exact.Rdot], rtol=1e-8)


@pytest.fixture(scope="module")
def grid():
    return Grid(3, 16)


def test_a0_eigenvalues_at_rest(grid):
    system = cosmo_system()
    for R in (1.0, 1.3):
        rep = check_symmetry_positivity(system, grid.zeros(4), 0.0, aux=np.array([R, 0.5]))
        rho_hat = R**-3
        assert rep.a0_min_eig == pytest.approx(min(2 / rho_hat, 1.0), rel=1e-14)
        assert rep.a0_max_eig == pytest.approx(max(2 / rho_hat, 1.0), rel=1e-14)
        assert max(rep.flux_asymmetry) == 0.0


def test_symmetry_on_random_states(grid):
    system = cosmo_system()
    for seed in range(5):
        u = random_band_limited(grid, 4, seed=seed, k_cut=4, amplitude=0.3)
        rep = check_symmetry_positivity(system, u, 0.0)
        assert max(rep.flux_asymmetry) < 1e-13 and rep.a0_asymmetry < 1e-13
        assert rep.a0_min_eig > 0 and math.isfinite(rep.constant)


def test_energy_sandwich(grid):
    system = cosmo_system()
    for seed in range(20):
        u = random_band_limited(grid, 4, seed=seed, k_cut=4, amplitude=0.3)
        c = check_symmetry_positivity(system, u, 0.0).constant
        for m in (0, 1, 2):
            e = weighted_energy(u, system, 0.0, m)
            h = integer_hm_norm(u, m) ** 2
            assert h / c * (1 - 1e-12) <= e <= c * h * (1 + 1e-12)


def test_fixed_point(grid):
    system = cosmo_system()
    u0 = grid.zeros(4)
    assert np.all(system.g(u0.values, 0.0, system.aux0, grid) == 0)
    traj = solve(system, u0, 1.0, 0.05)
    assert traj.completed
    assert max(s.sup() for s in traj.states) < 1e-10
    R_end = traj.diagnostics[-1]["R"]
    assert R_end == pytest.approx(einstein_de_sitter(1.0).R, rel=1e-5)


def test_zero_mean_drift(grid):
    system = cosmo_system()
    u0 = random_band_limited(grid, 4, seed=3, k_cut=3, amplitude=1e-6)
    vals = u0.values.copy()
    vals[0] -= vals[0].mean()
    traj = solve(system, RealField(grid, vals), 0.5, 0.025)
    assert traj.completed
    assert max(abs(d["sigma_mean"]) for d in traj.diagnostics) < 1e-9


def test_cointegration_matches_curve(grid):
    eos = EosModel()
    curve = BackgroundCurve(integrate_background(1.0, EDS_RDOT, T=0.5, dt=1e-3))
    u0 = random_band_limited(grid, 4, seed=4, k_cut=3, amplitude=1e-3)
    vals = u0.values.copy()
    vals[0] -= vals[0].mean()
    a = solve(cosmo_system(eos), RealField(grid, vals), 0.5, 0.025).final
    b = solve(cosmo_system(eos, background=curve), RealField(grid, vals), 0.5, 0.025).final
    # the two clocks differ only by the RK4 error of the background at dt = 0.025
    assert np.max(np.abs(a.values - b.values)) < 1e-4 * a.sup()


def test_invariant_breach(grid):
    eos = EosModel(lambda r: -r, lambda r: -np.ones_like(r), "negative")
    system = cosmo_system(eos)
    u = grid.zeros(4).values
    assert "g'" in system.invariant(u, 0.0, system.aux0, grid)
    u2 = u.copy()
    u2[0] = -2.0
    assert "positive" in cosmo_system().invariant(u2, 0.0, np.array([1.0, 0.0]), grid)


def test_aux_at(grid):
    system = cosmo_system()
    np.testing.assert_allclose(system.aux_at(0.3), [einstein_de_sitter(0.3).R, einstein_de_sitter(0.3).Rdot], rtol=1e-10)
