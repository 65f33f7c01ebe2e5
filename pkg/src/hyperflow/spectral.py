"""Fourier machinery on uniform collocation grids.

Fields are stored as arrays of shape ``(N, n, ..., n)`` (component axis first).
Spectral coefficients are normalised so that ``u(x) = sum_k c_k exp(i k.(x - x0))``
where ``x0`` is the first grid node; with this convention

    integral |u|^2 dx = V * sum_k |c_k|^2,

``V`` being the box volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import fft as sfft

__all__ = [
    "Grid",
    "RealField",
    "SpectralField",
    "SupportError",
    "transform",
    "inverse_transform",
    "lambda_s",
    "bessel_multiplier",
    "partial_derivative",
    "derivative",
    "gradient",
    "rescale",
    "dealias",
    "support_radius",
    "boundary_amplitude",
    "random_band_limited",
    "smooth_bump",
    "smooth_bump_gradient",
    "trig_interpolant_1d",
]


class SupportError(ValueError):
    """A compactly supported field does not fit where it has to."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a box in ``dim`` dimensions.

    Periodic grids (tori) start at the origin, ``x_j = j h``. Non-periodic
    grids stand for a truncated piece of R^d and are centred, ``x_j = -L/2 + j h``,
    so the box midpoint is the coordinate origin. The numerics are identical;
    only the coordinates differ.
    """

    dim: int
    points: int
    box_length: tuple[float, ...] | float = 2 * math.pi
    periodic: bool = True

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points < 8 or not _is_power_of_two(self.points):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.points}")
        lengths = self.box_length
        if np.isscalar(lengths):
            lengths = (float(lengths),) * self.dim
        lengths = tuple(float(x) for x in lengths)
        if len(lengths) != self.dim:
            raise ValueError("box_length must have one entry per axis")
        if any(not (x > 0) for x in lengths):
            raise ValueError("box_length must be positive")
        object.__setattr__(self, "box_length", lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / self.points for length in self.box_length)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box_length))

    @property
    def origin(self) -> tuple[float, ...]:
        if self.periodic:
            return (0.0,) * self.dim
        return tuple(-length / 2 for length in self.box_length)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """1-D node coordinates per axis."""
        return tuple(o + h * np.arange(self.points) for o, h in zip(self.origin, self.spacing))

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def centered_mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinates relative to the box midpoint."""
        centers = [o + length / 2 for o, length in zip(self.origin, self.box_length)]
        return tuple(x - c for x, c in zip(self.mesh, centers))

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| measured from the box midpoint."""
        return np.sqrt(sum(x**2 for x in self.centered_mesh))

    @cached_property
    def mode_numbers(self) -> tuple[np.ndarray, ...]:
        return tuple(sfft.fftfreq(self.points, d=1.0 / self.points) for _ in range(self.dim))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumbers per axis: integers times 2 pi / L."""
        return tuple(2 * np.pi * m / length for m, length in zip(self.mode_numbers, self.box_length))

    @cached_property
    def k_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.wavenumbers, indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.k_mesh)

    @cached_property
    def nyquist_mask(self) -> tuple[np.ndarray, ...]:
        """Per axis, True on the unpaired Nyquist plane."""
        out = []
        for a, m in enumerate(self.mode_numbers):
            shape = [1] * self.dim
            shape[a] = self.points
            out.append((np.abs(m) == self.points // 2).reshape(shape))
        return tuple(out)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, self.points * factor, self.box_length, self.periodic)

    def zeros(self, components: int = 1) -> "RealField":
        return RealField(self, np.zeros((components,) + self.shape))


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples of an N-component function at the nodes of ``grid``."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape == self.grid.shape:
            vals = vals[None, ...]
        if vals.shape[1:] != self.grid.shape:
            raise ValueError(f"values of shape {vals.shape} do not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> "RealField":
        return RealField(self.grid, self.values[i : i + 1])

    def with_values(self, values: np.ndarray) -> "RealField":
        return RealField(self.grid, values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def integral(self) -> np.ndarray:
        """Per-component integral over the box (trapezoidal = spectral for periodic data)."""
        axes = tuple(range(1, self.grid.dim + 1))
        return self.values.sum(axis=axes) * self.grid.cell_volume

    def _check(self, other: "RealField"):
        if other.grid != self.grid or other.components != self.components:
            raise ValueError("fields live on different grids or have different component counts")

    def __add__(self, other):
        if isinstance(other, RealField):
            self._check(other)
            return RealField(self.grid, self.values + other.values)
        return RealField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, RealField):
            self._check(other)
            return RealField(self.grid, self.values - other.values)
        return RealField(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, RealField):
            self._check(other)
            return RealField(self.grid, self.values * other.values)
        return RealField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return RealField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coefficients: np.ndarray = dc_field(repr=False)

    @property
    def components(self) -> int:
        return self.coefficients.shape[0]


def _fft_axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(1, grid.dim + 1))


def transform(field: RealField) -> SpectralField:
    axes = _fft_axes(field.grid)
    coeffs = sfft.fftn(field.values, axes=axes) / field.grid.size
    return SpectralField(field.grid, coeffs)


def inverse_transform(spec: SpectralField) -> RealField:
    axes = _fft_axes(spec.grid)
    vals = sfft.ifftn(spec.coefficients * spec.grid.size, axes=axes)
    return RealField(spec.grid, vals.real)


def _apply_multiplier(field: RealField, multiplier: np.ndarray) -> RealField:
    spec = transform(field)
    return inverse_transform(SpectralField(field.grid, spec.coefficients * multiplier))


def bessel_multiplier(grid: Grid, s: float) -> np.ndarray:
    """(1 + |k|^2)^(s/2) on the grid's wavenumbers."""
    return (1.0 + grid.k_squared) ** (s / 2.0)


def lambda_s(field: RealField, s: float) -> RealField:
    """Bessel potential: each mode k multiplied by (1 + |k|^2)^(s/2)."""
    if s == 0:
        return field
    return _apply_multiplier(field, bessel_multiplier(field.grid, s))


def _derivative_multiplier(grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    if not 0 <= axis < grid.dim:
        raise IndexError(f"axis {axis} out of range for a {grid.dim}-d grid")
    mult = (1j * grid.k_mesh[axis]) ** order
    if order % 2 == 1:
        mult = np.where(grid.nyquist_mask[axis], 0.0, mult)
    return mult


def partial_derivative(field: RealField, axis: int, order: int = 1) -> RealField:
    """Spectral derivative along ``axis`` (odd orders drop the Nyquist mode)."""
    return _apply_multiplier(field, _derivative_multiplier(field.grid, axis, order))


def derivative(field: RealField, alpha: Sequence[int]) -> RealField:
    """Mixed derivative for the multi-index ``alpha``."""
    grid = field.grid
    if len(alpha) != grid.dim:
        raise ValueError("multi-index length must equal the grid dimension")
    if not any(alpha):
        return field
    mult = np.ones(grid.shape, dtype=complex)
    for axis, order in enumerate(alpha):
        if order:
            mult = mult * _derivative_multiplier(grid, axis, order)
    return _apply_multiplier(field, mult)


def gradient(field: RealField) -> list[RealField]:
    spec = transform(field)
    out = []
    for axis in range(field.grid.dim):
        mult = _derivative_multiplier(field.grid, axis)
        out.append(inverse_transform(SpectralField(field.grid, spec.coefficients * mult)))
    return out


def dealias(spec: SpectralField, rule: float = 2.0 / 3.0) -> SpectralField:
    """Zero every mode with some |m_a| above ``rule * n/2``."""
    if not 0 < rule <= 1:
        raise ValueError("dealias rule must lie in (0, 1]")
    if rule == 1:
        return spec
    grid = spec.grid
    cutoff = rule * grid.points / 2
    keep = np.ones(grid.shape, dtype=bool)
    for axis, m in enumerate(grid.mode_numbers):
        shape = [1] * grid.dim
        shape[axis] = grid.points
        keep = keep & (np.abs(m) <= cutoff).reshape(shape)
    return SpectralField(grid, spec.coefficients * keep)


# --- compact support helpers -------------------------------------------------


def support_radius(field: RealField, rel_tol: float = 1e-12) -> float:
    """Largest distance from the box midpoint where |u| exceeds rel_tol * sup|u|."""
    amp = np.max(np.abs(field.values), axis=0)
    peak = amp.max()
    if peak == 0:
        return 0.0
    return float(field.grid.radius[amp > rel_tol * peak].max())


def boundary_amplitude(field: RealField, band: int = 2) -> float:
    """sup|u| over the outermost ``band`` cells, relative to sup|u| (wrap-around monitor)."""
    amp = np.max(np.abs(field.values), axis=0)
    peak = amp.max()
    if peak == 0:
        return 0.0
    mask = np.zeros(field.grid.shape, dtype=bool)
    for axis in range(field.grid.dim):
        idx = [slice(None)] * field.grid.dim
        idx[axis] = np.r_[0:band, field.grid.points - band : field.grid.points]
        mask[tuple(idx)] = True
    return float(amp[mask].max() / peak)


# --- rescaling -----------------------------------------------------------------


def _refine_axis(values: np.ndarray, axis: int, factor: int) -> np.ndarray:
    """Exact trigonometric refinement by zero padding along one array axis."""
    n = values.shape[axis]
    coeffs = sfft.fft(values, axis=axis)
    half = n // 2
    shape = list(values.shape)
    shape[axis] = n * factor
    padded = np.zeros(shape, dtype=complex)
    sl = [slice(None)] * values.ndim

    def put(dst, src):
        d = list(sl)
        d[axis] = dst
        s = list(sl)
        s[axis] = src
        padded[tuple(d)] = coeffs[tuple(s)]

    put(slice(0, half), slice(0, half))
    put(slice(n * factor - half + 1, n * factor), slice(half + 1, n))
    # split the Nyquist mode symmetrically so the interpolant stays real
    nyq_src = [slice(None)] * values.ndim
    nyq_src[axis] = slice(half, half + 1)
    nyq = coeffs[tuple(nyq_src)] / 2
    d1 = list(sl)
    d1[axis] = slice(half, half + 1)
    d2 = list(sl)
    d2[axis] = slice(n * factor - half, n * factor - half + 1)
    padded[tuple(d1)] += nyq
    padded[tuple(d2)] += nyq
    return sfft.ifft(padded, axis=axis).real * factor


def _eval_matrix(n: int, positions: np.ndarray) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant of n samples at index-space positions."""
    m = sfft.fftfreq(n, d=1.0 / n)
    theta = 2 * np.pi * np.outer(positions, m) / n
    basis = np.exp(1j * theta)
    half = n // 2
    basis[:, half] = np.cos(np.pi * positions)  # Nyquist as a cosine
    dft = np.exp(-2j * np.pi * np.outer(m, np.arange(n)) / n) / n
    return (basis @ dft).real


def _resample_axis(values: np.ndarray, axis: int, positions: np.ndarray) -> np.ndarray:
    """Values of the source (along ``axis``) at fractional index positions; zero outside."""
    n = values.shape[axis]
    inside = (positions > -0.5) & (positions < n - 0.5)
    rounded = np.rint(positions)
    if np.all(np.abs(positions - rounded) < 1e-9):
        idx = np.clip(rounded.astype(int), 0, n - 1)
        out = np.take(values, idx, axis=axis)
    else:
        factor = None
        for p in (2, 4, 8, 16, 32, 64):
            if np.all(np.abs(positions * p - np.rint(positions * p)) < 1e-9 * p):
                factor = p
                break
        if factor is not None:
            fine = _refine_axis(values, axis, factor)
            idx = np.clip(np.rint(positions * factor).astype(int), 0, n * factor - 1)
            out = np.take(fine, idx, axis=axis)
        else:
            mat = _eval_matrix(n, positions)
            out = np.moveaxis(np.tensordot(mat, np.moveaxis(values, axis, 0), axes=(1, 0)), 0, axis)
    shape = [1] * values.ndim
    shape[axis] = len(positions)
    return out * inside.reshape(shape)


def rescale(field: RealField, epsilon: float, target: Grid | None = None, guard: float = 0.0) -> RealField:
    """Samples of u(epsilon x) on ``target`` (default: the source grid).

    The source is read through its trigonometric interpolant; points whose
    preimage leaves the source box get zero, which is exact for compactly
    supported sources. Raises :class:`SupportError` when the scaled support
    does not fit inside the target box.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    src = field.grid
    target = src if target is None else target
    if target.dim != src.dim:
        raise ValueError("target grid dimension differs from source")
    if epsilon == 1 and target == src:
        return field
    r = support_radius(field)
    half_width = min(target.box_length) / 2
    if r / epsilon > half_width * (1 - guard) - max(target.spacing):
        raise SupportError(
            f"scaled support radius {r / epsilon:.4g} escapes the target box (half width {half_width:.4g})"
        )
    values = field.values
    src_centre = [o + length / 2 for o, length in zip(src.origin, src.box_length)]
    tgt_centre = [o + length / 2 for o, length in zip(target.origin, target.box_length)]
    for a in range(src.dim):
        y = target.axes[a] - tgt_centre[a]
        x = epsilon * y + src_centre[a]
        positions = (x - src.origin[a]) / src.spacing[a]
        values = _resample_axis(values, a + 1, positions)
    return RealField(target, values)


# --- data families -----------------------------------------------------------


def random_band_limited(
    grid: Grid,
    components: int = 1,
    seed: int = 0,
    k_cut: int = 8,
    decay: float = 4.0,
    amplitude: float = 1.0,
    zero_mean: bool = False,
) -> RealField:
    """Seeded low-pass Gaussian noise.

    Mode numbers m (integer per axis) with max|m_a| <= k_cut get independent
    standard normal real/imaginary parts times exp(-(|m|/decay)^2); the result
    is symmetrised so the field is real, then scaled to sup norm ``amplitude``.
    The draw depends only on (seed, k_cut, dim, components), not on the grid
    resolution, so the same field can be sampled on refined grids.
    """
    if k_cut >= grid.points // 2:
        raise ValueError("k_cut must stay below the Nyquist mode")
    rng = np.random.default_rng(seed)
    width = 2 * k_cut + 1
    shape = (components,) + (width,) * grid.dim
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    m = np.arange(-k_cut, k_cut + 1)
    mm = np.meshgrid(*([m] * grid.dim), indexing="ij")
    envelope = np.exp(-sum(x.astype(float) ** 2 for x in mm) / decay**2)
    raw = raw * envelope
    # Hermitian symmetrisation: c(-m) = conj(c(m))
    flipped = np.conj(raw[(slice(None),) + (slice(None, None, -1),) * grid.dim])
    raw = 0.5 * (raw + flipped)
    if zero_mean:
        raw[(slice(None),) + (k_cut,) * grid.dim] = 0.0
    coeffs = np.zeros((components,) + grid.shape, dtype=complex)
    idx = np.ix_(*([np.arange(components)] + [m % grid.points] * grid.dim))
    coeffs[idx] = raw
    values = sfft.ifftn(coeffs * grid.size, axes=_fft_axes(grid)).real
    peak = np.max(np.abs(values))
    if peak > 0:
        values = values * (amplitude / peak)
    return RealField(grid, values)


def smooth_bump(grid: Grid, center: Sequence[float], radius: float, amplitude: float = 1.0) -> RealField:
    """C-infinity bump exp(1 - 1/(1 - q^2)) for q = |x - center|/radius < 1, zero outside.

    ``center`` is in coordinates relative to the box midpoint.
    """
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    q2 = sum((x - c) ** 2 for x, c in zip(grid.centered_mesh, center)) / radius**2
    out = np.zeros(grid.shape)
    inside = q2 < 1
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - q2[inside]))
    return RealField(grid, out)


def smooth_bump_gradient(grid: Grid, center: Sequence[float], radius: float, amplitude: float = 1.0) -> list[RealField]:
    """Exact partial derivatives of :func:`smooth_bump`, sampled at the nodes."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    offsets = [x - c for x, c in zip(grid.centered_mesh, center)]
    q2 = sum(o**2 for o in offsets) / radius**2
    inside = q2 < 1
    base = np.zeros(grid.shape)
    qi = q2[inside]
    base[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - qi)) * (-2.0 / (radius**2 * (1.0 - qi) ** 2))
    return [RealField(grid, base * o) for o in offsets]


def trig_interpolant_1d(field: RealField, component: int = 0):
    """Callables (u, du) evaluating the 1-D trigonometric interpolant and its derivative.

    The Nyquist mode is dropped from the derivative and kept as a cosine in the value.
    """
    grid = field.grid
    if grid.dim != 1:
        raise ValueError("trig_interpolant_1d needs a 1-D grid")
    n = grid.points
    c = sfft.fft(field.values[component]) / n
    k = grid.wavenumbers[0].copy()
    x0 = grid.origin[0]
    half = n // 2
    nyq = c[half].real
    k_nyq = np.pi * n / grid.box_length[0]
    c = c.copy()
    c[half] = 0.0

    def value(x):
        x = np.asarray(x, dtype=float)
        ph = np.exp(1j * np.multiply.outer(x - x0, k))
        return (ph @ c).real + nyq * np.cos(k_nyq * (x - x0))

    def slope(x):
        x = np.asarray(x, dtype=float)
        ph = np.exp(1j * np.multiply.outer(x - x0, k))
        return (ph @ (1j * k * c)).real

    return value, slope
