import math

import numpy as np
import pytest
from scipy.special import erf

from hyperflow.makino import (
    EpmParams,
    density_from_makino,
    epm_system,
    makino_from_density,
    makino_source,
    power_difference,
    power_difference_bound,
)
from hyperflow.solver import check_symmetry_positivity, solve
from hyperflow.spectral import Grid, RealField


def test_params_validation():
    with pytest.raises(ValueError):
        EpmParams(gamma=1.0)
    with pytest.raises(ValueError):
        EpmParams(gamma=3.5)
    with pytest.raises(ValueError):
        EpmParams(K=0.0)
    p = EpmParams(1.0, 2.0)
    assert p.beta == 2.0
    assert p.c_K_gamma == pytest.approx(math.pi / 2, abs=1e-12)


def test_makino_values():
    p = EpmParams(1.0, 2.0)
    g = Grid(1, 16)
    w = makino_from_density(RealField(g, np.ones(16)), p)
    np.testing.assert_allclose(w.values, 2 * math.sqrt(2), rtol=1e-15)
    rho = density_from_makino(RealField(g, np.full(16, 2 * math.sqrt(2))), p)
    np.testing.assert_allclose(rho.values, 1.0, rtol=1e-14)
    assert makino_from_density(g.zeros(), p).sup() == 0.0
    assert density_from_makino(g.zeros(), p).sup() == 0.0
    with pytest.raises(ValueError):
        makino_from_density(RealField(g, -np.ones(16)), p)
    with pytest.raises(ValueError):
        density_from_makino(RealField(g, -np.ones(16)), p)


@pytest.mark.parametrize("K,gamma", [(1.0, 1.5), (1.0, 2.0), (2.0, 5.0 / 3.0)])
def test_roundtrip_and_source_identity(K, gamma):
    p = EpmParams(K, gamma)
    g = Grid(2, 16)
    rho = RealField(g, np.random.default_rng(0).uniform(0.01, 3.0, g.shape))
    w = makino_from_density(rho, p)
    np.testing.assert_allclose(density_from_makino(w, p).values, rho.values, rtol=1e-12)
    np.testing.assert_allclose(makino_source(w.values, p), 4 * math.pi * rho.values, rtol=1e-12)


def test_power_difference_identity():
    rng = np.random.default_rng(1)
    for beta in (2.0, 3.0, 2.5, 4.0):
        for _ in range(20):
            w, wh = rng.uniform(0, 3, 2)
            exact = w**beta - wh**beta
            assert power_difference(w, wh, beta) == pytest.approx(exact, rel=1e-8, abs=1e-14)
            assert abs(exact) <= power_difference_bound(w, wh, beta) * (1 + 1e-12)
    with pytest.raises(ValueError):
        power_difference(-1.0, 1.0, 2.0)


def test_symmetry_and_vanishing_flux():
    g = Grid(3, 16)
    u = RealField(g, np.random.default_rng(2).uniform(0, 1, (4,) + g.shape))
    rep = check_symmetry_positivity(epm_system(EpmParams()), u, 0.0)
    assert max(rep.flux_asymmetry) < 1e-13
    assert rep.flux_at_zero == 0.0
    assert rep.constant == 1.0


def test_vacuum_fixed_point():
    g = Grid(3, 16)
    traj = solve(epm_system(EpmParams()), g.zeros(4), 0.2, 0.05)
    assert traj.completed and all(s.sup() == 0.0 for s in traj.states)


def test_gaussian_gravity_points_inward():
    p = EpmParams(1.0, 2.0)
    g = Grid(3, 64, 16.0, periodic=False)
    r = np.maximum(g.radius, g.spacing[0])
    rho = np.exp(-g.radius**2 / 2) / (2 * math.pi) ** 1.5
    u = np.zeros((4,) + g.shape)
    u[0] = makino_from_density(RealField(g, rho), p).values[0]
    accel = epm_system(p, "free_space").g(u, 0.0, None, g)
    outside = r > 3.0
    radial = sum(accel[1 + a] * g.mesh[a] for a in range(3)) / r
    assert np.all(radial[outside] < 0)
    # -d/dr of -erf(r/sqrt2)/r
    exact = -(erf(r / math.sqrt(2)) / r**2 - math.sqrt(2 / math.pi) * np.exp(-r**2 / 2) / r)
    assert np.max(np.abs(radial[outside] - exact[outside])) / np.max(np.abs(exact[outside])) < 2e-3


def test_torus_mass_conservation():
    p = EpmParams(1.0, 2.0)
    g = Grid(3, 16)
    X, Y, Z = g.mesh
    rho = 1.0 + 0.1 * np.cos(X) * np.cos(Y) + 0.05 * np.sin(Z)
    u0 = np.zeros((4,) + g.shape)
    u0[0] = makino_from_density(RealField(g, rho), p).values[0]
    u0[1] = 0.05 * np.sin(Y)
    traj = solve(epm_system(p, "torus"), RealField(g, u0), 0.5, 0.025)
    assert traj.completed
    mass = [d["mass"] for d in traj.diagnostics]
    assert max(abs(m - mass[0]) for m in mass) / mass[0] < 1e-6
    assert all(d["source_mean"] > 0 for d in traj.diagnostics)


def test_free_space_vacuum_stays_nonnegative():
    p = EpmParams(1.0, 2.0)
    g = Grid(3, 32, 16.0, periodic=False)
    u0 = np.zeros((4,) + g.shape)
    u0[0] = np.exp(-0.5 * g.radius**2)
    traj = solve(epm_system(p, "free_space"), RealField(g, u0), 0.25, 0.025, dealias_rule=1.0, record_every=5)
    assert traj.completed
    assert min(d["w_min"] for d in traj.diagnostics) > -1e-8


def test_domain_validation():
    with pytest.raises(ValueError):
        epm_system(EpmParams(), "sphere")
    with pytest.raises(ValueError):
        epm_system(EpmParams(), "free_space", dim=2)
