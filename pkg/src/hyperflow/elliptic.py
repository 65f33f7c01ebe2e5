"""Poisson solvers (torus and isolated) and order-zero Fourier multipliers."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .spectral import Grid, RealField, SupportError, boundary_amplitude, transform, inverse_transform, SpectralField

__all__ = [
    "poisson_torus_zero_mean",
    "grad_inv_laplacian",
    "zero_order_operator",
    "poisson_free_space",
    "free_space_gradient",
    "CUBE_INVERSE_DISTANCE",
]

MEAN_TOL = 1e-10

# integral of 1/|x| over the unit cube centred at 0: 8 * (1/2)^2 * (-pi/4 + (3/2) ln(2 + sqrt 3))
CUBE_INVERSE_DISTANCE = 2.0 * (-math.pi / 4 + 1.5 * math.log(2 + math.sqrt(3)))


def _mean_and_check(f: RealField, project_mean: bool) -> tuple[np.ndarray, np.ndarray]:
    means = f.integral() / f.grid.volume
    norm = math.sqrt(float(np.sum(f.values**2)) * f.grid.cell_volume)
    if not project_mean and np.any(np.abs(means) > MEAN_TOL * max(norm, np.finfo(float).tiny)):
        raise ValueError(
            f"Poisson source on the torus must have zero mean (|mean| = {np.max(np.abs(means)):.3e})"
        )
    return means, norm


def _inverse_laplacian_coeffs(f: RealField) -> np.ndarray:
    k2 = f.grid.k_squared
    c = transform(f).coefficients
    safe = np.where(k2 == 0, 1.0, k2)
    out = -c / safe
    out[(slice(None),) + (0,) * f.grid.dim] = 0.0
    return out


def poisson_torus_zero_mean(f: RealField, project_mean: bool = False) -> RealField:
    """Solve Delta phi = f on the periodic box with zero-mean phi.

    A nonzero mean of ``f`` violates solvability and is rejected, unless
    ``project_mean`` asks for the mean to be subtracted first.
    """
    _mean_and_check(f, project_mean)
    return inverse_transform(SpectralField(f.grid, _inverse_laplacian_coeffs(f)))


def grad_inv_laplacian(f: RealField, project_mean: bool = False, free_space: bool = False) -> list[RealField]:
    """grad(Delta^{-1} f), one field per axis (``f`` scalar).

    Torus: spectral, on zero-mean ``f``. Free space (d = 3): f compactly
    supported, grad phi for the decaying solution of Delta phi = f.
    """
    if f.components != 1:
        raise ValueError("grad_inv_laplacian expects a scalar field")
    if free_space:
        return [g * (1.0 / (4 * math.pi)) for g in free_space_gradient(f)]
    _mean_and_check(f, project_mean)
    phi_hat = _inverse_laplacian_coeffs(f)
    out = []
    for axis in range(f.grid.dim):
        mult = 1j * f.grid.k_mesh[axis]
        mult = np.where(f.grid.nyquist_mask[axis], 0.0, mult)
        out.append(inverse_transform(SpectralField(f.grid, phi_hat * mult)))
    return out


def zero_order_operator(f: RealField, i: int, j: int) -> RealField:
    """d_i d_j Delta^{-1} on the torus: mode k multiplied by k_i k_j / |k|^2, k = 0 sent to 0.

    Summing i = j over the axes returns the zero-mean part of ``f``.
    """
    grid = f.grid
    for axis in (i, j):
        if not 0 <= axis < grid.dim:
            raise IndexError(f"axis {axis} out of range")
    k2 = grid.k_squared
    mult = np.where(k2 == 0, 0.0, grid.k_mesh[i] * grid.k_mesh[j] / np.where(k2 == 0, 1.0, k2))
    c = transform(f).coefficients
    return inverse_transform(SpectralField(grid, c * mult))


# --- isolated (free-space) problems ---------------------------------------------


@lru_cache(maxsize=8)
def _free_space_kernels(points: int, spacing: tuple[float, ...], with_gradient: bool):
    """FFTs of -1/|x| (and x/|x|^3) on the doubled grid, ordered for circular convolution."""
    dim = len(spacing)
    n2 = 2 * points
    axes_1d = []
    for h in spacing:
        idx = np.arange(n2)
        idx = np.where(idx < points, idx, idx - n2)
        axes_1d.append(idx * h)
    mesh = np.meshgrid(*axes_1d, indexing="ij")
    r = np.sqrt(sum(x**2 for x in mesh))
    origin = (0,) * dim
    with np.errstate(divide="ignore"):
        inv_r = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
    kernel = -inv_r
    cell = float(np.prod(spacing))
    if dim == 3:
        h = cell ** (1.0 / 3.0)
        # cell average of -1/|x| over the origin cell (cubic cells)
        kernel[origin] = -CUBE_INVERSE_DISTANCE / h
    else:
        raise ValueError("free-space Poisson solver is implemented for d = 3")
    fk = sfft.rfftn(kernel)
    gk = None
    if with_gradient:
        gk = []
        for x in mesh:
            g = x * inv_r**3
            g[origin] = 0.0
            gk.append(sfft.rfftn(g))
    return fk, gk


def _convolve(rho: np.ndarray, kernel_hat: np.ndarray, points: int, cell: float) -> np.ndarray:
    dim = rho.ndim
    padded_shape = (2 * points,) * dim
    rho_hat = sfft.rfftn(rho, s=padded_shape)
    full = sfft.irfftn(rho_hat * kernel_hat, s=padded_shape) * cell
    return full[(slice(0, points),) * dim]


def _check_isolated(rho: RealField, guard: float):
    if rho.grid.dim != 3:
        raise ValueError("free-space Poisson solver is implemented for d = 3")
    if len(set(rho.grid.spacing)) != 1:
        raise ValueError("free-space Poisson solver needs cubic cells")
    if boundary_amplitude(rho) > guard:
        raise SupportError("source reaches the guard band: enlarge the box")


def poisson_free_space(rho: RealField, guard: float = 1e-8) -> RealField:
    """phi = -integral rho(y)/|x - y| dy, so that Delta phi = 4 pi rho in R^3.

    Discrete convolution with the -1/|x| kernel on a zero-padded doubled grid;
    the singular origin cell carries the cell average of -1/|x|.
    """
    _check_isolated(rho, guard)
    grid = rho.grid
    fk, _ = _free_space_kernels(grid.points, grid.spacing, False)
    vals = np.stack([_convolve(c, fk, grid.points, grid.cell_volume) for c in rho.values])
    return RealField(grid, vals)


def free_space_gradient(rho: RealField, guard: float = 1e-8) -> list[RealField]:
    """grad phi for phi = poisson_free_space(rho), via the x/|x|^3 kernel (no boundary differencing)."""
    _check_isolated(rho, guard)
    if rho.components != 1:
        raise ValueError("free_space_gradient expects a scalar density")
    grid = rho.grid
    _, gks = _free_space_kernels(grid.points, grid.spacing, True)
    return [RealField(grid, _convolve(rho.values[0], gk, grid.points, grid.cell_volume)) for gk in gks]
