import math

import numpy as np
import pytest
from scipy.special import erf

from hyperflow.elliptic import (
    free_space_gradient,
    grad_inv_laplacian,
    poisson_free_space,
    poisson_torus_zero_mean,
    zero_order_operator,
)
from hyperflow.norms import hs_norm
from hyperflow.spectral import Grid, RealField, SupportError, gradient, partial_derivative, random_band_limited


def _laplacian(f):
    return sum(partial_derivative(f, a, 2) for a in range(f.grid.dim))


def test_torus_zero_source(torus3):
    assert poisson_torus_zero_mean(torus3.zeros()).sup() == 0.0
    assert all(g.sup() == 0.0 for g in grad_inv_laplacian(torus3.zeros()))


def test_torus_cosine(torus3):
    X = torus3.mesh[0]
    f = RealField(torus3, np.cos(X))
    phi = poisson_torus_zero_mean(f)
    np.testing.assert_allclose(phi.values[0], -np.cos(X), atol=1e-14)
    grads = grad_inv_laplacian(f)
    np.testing.assert_allclose(grads[0].values[0], np.sin(X), atol=1e-14)
    assert grads[1].sup() < 1e-15 and grads[2].sup() < 1e-15


def test_torus_residual_and_divergence(torus3):
    f = random_band_limited(torus3, seed=3, k_cut=5, zero_mean=True)
    phi = poisson_torus_zero_mean(f)
    assert (_laplacian(phi) - f).sup() < 1e-10
    grads = grad_inv_laplacian(f)
    div = sum(partial_derivative(g, a) for a, g in enumerate(grads))
    assert (div - f).sup() < 1e-10
    # curl-free
    curl = partial_derivative(grads[1], 0) - partial_derivative(grads[0], 1)
    assert curl.sup() < 1e-10


def test_torus_rejects_mean(torus3):
    f = RealField(torus3, np.ones(torus3.shape))
    with pytest.raises(ValueError):
        poisson_torus_zero_mean(f)
    assert poisson_torus_zero_mean(f, project_mean=True).sup() == 0.0


def test_zero_order_trace_and_vanishing(torus3):
    f = random_band_limited(torus3, seed=7, k_cut=5, zero_mean=True)
    trace = sum(zero_order_operator(f, a, a) for a in range(3))
    assert (trace - f).sup() < 1e-13
    X = torus3.mesh[0]
    single = RealField(torus3, np.cos(2 * X))
    assert zero_order_operator(single, 1, 2).sup() < 1e-15
    with pytest.raises(IndexError):
        zero_order_operator(f, 0, 3)


def test_zero_order_is_contractive(torus3):
    for seed in range(50):
        f = random_band_limited(torus3, seed=seed, k_cut=5, zero_mean=True)
        i, j = seed % 3, (seed // 3) % 3
        for s in (0.0, 1.0, 2.5):
            assert hs_norm(zero_order_operator(f, i, j), s) <= hs_norm(f, s) * (1 + 1e-12)


def test_zero_order_matches_composition(torus3):
    f = random_band_limited(torus3, seed=11, k_cut=5, zero_mean=True)
    composed = partial_derivative(grad_inv_laplacian(f)[2], 1)
    assert (zero_order_operator(f, 1, 2) - composed).sup() < 1e-13


def _gaussian(grid, sigma=1.0, mass=1.0, center=(0.0, 0.0, 0.0)):
    r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh, center))
    return RealField(grid, mass * np.exp(-r2 / (2 * sigma**2)) / (2 * math.pi * sigma**2) ** 1.5)


@pytest.fixture(scope="module")
def iso_grid():
    return Grid(3, 64, 16.0, periodic=False)


def test_free_space_zero(iso_grid):
    assert poisson_free_space(iso_grid.zeros()).sup() == 0.0


def test_free_space_gaussian_potential(iso_grid):
    rho = _gaussian(iso_grid)
    phi = poisson_free_space(rho).values[0]
    r = iso_grid.radius
    exact = -erf(r / math.sqrt(2)) / np.where(r > 0, r, 1.0)
    outside = r > 3.0
    rel = np.max(np.abs(phi[outside] - exact[outside]) / np.abs(exact[outside]))
    assert rel < 1e-4
    far = np.abs(r - 8.0) < 0.1
    assert np.max(np.abs(phi[far] * r[far] + 1.0)) < 0.01


def test_free_space_gradient_closed_form(iso_grid):
    rho = _gaussian(iso_grid)
    grads = free_space_gradient(rho)
    r = np.maximum(iso_grid.radius, iso_grid.spacing[0])
    outside = r > 3.0
    # d/dr of -erf(r/sqrt2)/r
    dphi = erf(r / math.sqrt(2)) / r**2 - math.sqrt(2 / math.pi) * np.exp(-r**2 / 2) / r
    exact_x = dphi * iso_grid.mesh[0] / r
    err = np.max(np.abs(grads[0].values[0][outside] - exact_x[outside]))
    assert err / np.max(np.abs(exact_x[outside])) < 2e-3
    # 4 pi grad(Delta^-1) of rho
    via = grad_inv_laplacian(rho, free_space=True)
    np.testing.assert_allclose(via[1].values, grads[1].values / (4 * math.pi), rtol=0, atol=1e-15)


def test_free_space_translation(iso_grid):
    h = iso_grid.spacing[0]
    a = poisson_free_space(_gaussian(iso_grid)).values[0]
    b = poisson_free_space(_gaussian(iso_grid, center=(h, 0.0, 0.0))).values[0]
    assert np.max(np.abs(b[1:] - a[:-1])) < 1e-6


def test_free_space_guard(iso_grid):
    wide = _gaussian(iso_grid, sigma=3.0)
    with pytest.raises(SupportError):
        poisson_free_space(wide)
    with pytest.raises(ValueError):
        poisson_free_space(Grid(2, 32, 8.0, periodic=False).zeros())
