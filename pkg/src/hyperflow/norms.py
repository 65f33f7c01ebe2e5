"""Sobolev norms: H^s, weighted L^2, and the dyadic weighted H_{s,delta} norm."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .spectral import (
    Grid,
    RealField,
    SupportError,
    bessel_multiplier,
    boundary_amplitude,
    derivative,
    rescale,
    support_radius,
    transform,
)

__all__ = [
    "hs_norm",
    "hs_inner",
    "l2_norm",
    "l2_delta_norm",
    "DyadicPartition",
    "NormSpec",
    "weighted_norm",
    "weighted_inner",
    "weighted_norm_direct",
    "multi_indices",
    "support_mask",
    "integer_hm_norm",
]

# compact-support fields must not reach the outer cells of a truncated box
BOUNDARY_TOL = 1e-10


def _spectral_weights(grid: Grid, s: float) -> np.ndarray:
    return bessel_multiplier(grid, 2 * s)


def hs_norm(field: RealField, s: float) -> float:
    """||u||_{H^s} = ||Lambda^s u||_{L^2}, evaluated on Fourier coefficients."""
    c = transform(field).coefficients
    total = np.sum(_spectral_weights(field.grid, s) * np.abs(c) ** 2)
    return math.sqrt(field.grid.volume * float(total))


def hs_inner(u: RealField, v: RealField, s: float) -> float:
    if u.grid != v.grid:
        raise ValueError("hs_inner: fields live on different grids")
    if u.components != v.components:
        raise ValueError("hs_inner: component counts differ")
    cu = transform(u).coefficients
    cv = transform(v).coefficients
    total = np.sum(_spectral_weights(u.grid, s) * cu * np.conj(cv)).real
    return u.grid.volume * float(total)


def l2_norm(field: RealField) -> float:
    """L^2 norm by grid quadrature."""
    return math.sqrt(float(np.sum(field.values**2)) * field.grid.cell_volume)


def _require_compact(field: RealField, what: str):
    if boundary_amplitude(field) > BOUNDARY_TOL:
        raise SupportError(f"{what}: field support touches the box boundary")


def l2_delta_norm(field: RealField, delta: float) -> float:
    """||(1 + |x|)^delta u||_{L^2}, |x| measured from the box midpoint."""
    if delta != 0:
        _require_compact(field, "l2_delta_norm")
    weight = (1.0 + field.grid.radius) ** (2 * delta)
    return math.sqrt(float(np.sum(weight * field.values**2)) * field.grid.cell_volume)


def multi_indices(dim: int, m: int):
    """All multi-indices alpha in N^dim with |alpha| <= m."""
    return [a for a in itertools.product(range(m + 1), repeat=dim) if sum(a) <= m]


def integer_hm_norm(field: RealField, m: int, weight: np.ndarray | None = None) -> float:
    """sqrt(sum_{|alpha|<=m} integral w |d^alpha u|^2) by quadrature of spectral derivatives."""
    if m < 0 or int(m) != m:
        raise ValueError("m must be a non-negative integer")
    total = 0.0
    for alpha in multi_indices(field.grid.dim, int(m)):
        d = derivative(field, alpha).values
        sq = d**2 if weight is None else weight * d**2
        total += float(np.sum(sq))
    return math.sqrt(total * field.grid.cell_volume)


def support_mask(field: RealField, pad_cells: int = 2) -> np.ndarray:
    """Nonzero set of the field, dilated by ``pad_cells`` grid cells."""
    nonzero = np.any(field.values != 0, axis=0)
    if pad_cells <= 0:
        return nonzero
    return ndimage.binary_dilation(nonzero, iterations=pad_cells)


def weighted_norm_direct(field: RealField, m: int, delta: float, shift_by_order: bool = True) -> float:
    """Integer-order weighted norm by quadrature of spectral derivatives.

    With ``shift_by_order`` (default) the alpha-th term carries the weight
    (1+|x|)^{2(delta+|alpha|)}, the integer-order norm that the dyadic norm is
    equivalent to. ``shift_by_order=False`` uses (1+|x|)^{2 delta} for every
    term. Derivatives of a compactly supported field vanish off its support,
    so quadrature is restricted to the (slightly dilated) support; this keeps
    spectral ringing away from the large far-field weights.
    """
    _require_compact(field, "weighted_norm_direct")
    if m < 0 or int(m) != m:
        raise ValueError("m must be a non-negative integer")
    mask = support_mask(field)
    one_plus_r = (1.0 + field.grid.radius)[mask]
    total = 0.0
    for alpha in multi_indices(field.grid.dim, int(m)):
        order = sum(alpha) if shift_by_order else 0
        d = derivative(field, alpha).values[:, mask]
        total += float(np.sum(one_plus_r ** (2 * (delta + order)) * d**2))
    return math.sqrt(total * field.grid.cell_volume)


# --- dyadic family ---------------------------------------------------------------


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def _cutoff(r: np.ndarray) -> np.ndarray:
    """chi(r): 1 on r <= 1, 0 on r >= 2."""
    return 1.0 - _smooth_step(np.asarray(r, dtype=float) - 1.0)


@dataclass(frozen=True)
class DyadicPartition:
    """Radial cutoffs psi_0 = chi(r), psi_j(r) = chi(r / 2^j) (1 - chi(r / 2^(j-2))).

    psi_0 = 1 on |x| <= 1 with support in |x| <= 2; for j >= 1, psi_j = 1 on
    2^(j-1) <= |x| <= 2^j with support in 2^(j-2) <= |x| <= 2^(j+1). All psi_j
    with j >= 1 are dilates of one profile, so |d^alpha psi_j| <= C_alpha 2^(-|alpha| j)
    with j-independent C_alpha. Neighbouring cutoffs overlap, hence
    1 <= sum_j psi_j <= 2 on the covered ball.
    """

    j_max: int = 6

    def psi(self, j: int, r: np.ndarray) -> np.ndarray:
        if j < 0:
            raise ValueError("dyadic index must be non-negative")
        r = np.asarray(r, dtype=float)
        if j == 0:
            return _cutoff(r)
        return _cutoff(r / 2.0**j) * (1.0 - _cutoff(r / 2.0 ** (j - 2)))

    def support(self, j: int) -> tuple[float, float]:
        if j == 0:
            return (0.0, 2.0)
        return (2.0 ** (j - 2), 2.0 ** (j + 1))

    def plateau(self, j: int) -> tuple[float, float]:
        if j == 0:
            return (0.0, 1.0)
        return (2.0 ** (j - 1), 2.0**j)

    @property
    def max_support_radius(self) -> float:
        """Fields must vanish beyond this radius so psi_j u = 0 for every j > j_max."""
        return 2.0 ** (self.j_max - 1)

    def decay_constants(self, max_order: int = 2, samples: int = 20001) -> list[float]:
        """Empirical C_k = max_j sup_r 2^(k j) |d^k psi_j / dr^k| for k = 0..max_order."""
        out = []
        for k in range(max_order + 1):
            best = 0.0
            for j in range(self.j_max + 1):
                lo, hi = self.support(j)
                r = np.linspace(lo, hi, samples)
                vals = self.psi(j, r)
                h = r[1] - r[0]
                for _ in range(k):
                    vals = np.gradient(vals, h)
                best = max(best, float(np.max(np.abs(vals))) * 2.0 ** (k * j))
            out.append(best)
        return out


@dataclass(frozen=True)
class NormSpec:
    """Parameters of the weighted norm: regularity s, weight delta, dyadic depth.

    ``piece_points`` fixes the resolution of the box of half width 4 on which
    every localised, rescaled piece is evaluated; ``None`` picks the source
    grid spacing (capped per dimension).
    """

    s: float
    delta: float = 0.0
    j_max: int = 6
    piece_points: int | None = None


_PIECE_CAP = {1: 4096, 2: 512, 3: 64}
PIECE_HALF_WIDTH = 4.0


def _piece_grid(field: RealField, spec: NormSpec) -> Grid:
    n = spec.piece_points
    if n is None:
        h = min(field.grid.spacing)
        n = 2 ** int(round(math.log2(2 * PIECE_HALF_WIDTH / h)))
        n = int(min(max(n, 16), _PIECE_CAP[field.grid.dim]))
    return Grid(field.grid.dim, n, 2 * PIECE_HALF_WIDTH, periodic=False)


def dyadic_pieces(field: RealField, spec: NormSpec, partition: DyadicPartition | None = None):
    """Yield (j, (psi_j u)_{2^j}) for the nonzero localised pieces."""
    partition = partition or DyadicPartition(spec.j_max)
    if partition.j_max != spec.j_max:
        raise ValueError("partition depth differs from NormSpec.j_max")
    _require_compact(field, "weighted_norm")
    r_supp = support_radius(field)
    if r_supp > partition.max_support_radius:
        raise SupportError(
            f"field support radius {r_supp:.4g} exceeds 2^(j_max-1) = {partition.max_support_radius:g}"
        )
    target = _piece_grid(field, spec)
    for j in range(spec.j_max + 1):
        lo, hi = partition.support(j)
        if r_supp < lo:
            break
        local = field * partition.psi(j, field.grid.radius)
        if not np.any(local.values):
            continue
        yield j, rescale(local, 2.0**j, target=target)


def weighted_norm(field: RealField, spec: NormSpec, partition: DyadicPartition | None = None) -> float:
    """||u||^2 = sum_j 2^{(delta + d/2) 2 j} ||(psi_j u)_{2^j}||^2_{H^s}."""
    d = field.grid.dim
    total = 0.0
    for j, piece in dyadic_pieces(field, spec, partition):
        total += 2.0 ** ((spec.delta + d / 2) * 2 * j) * hs_norm(piece, spec.s) ** 2
    return math.sqrt(total)


def weighted_inner(u: RealField, v: RealField, spec: NormSpec, partition: DyadicPartition | None = None) -> float:
    if u.grid != v.grid:
        raise ValueError("weighted_inner: fields live on different grids")
    d = u.grid.dim
    pu = dict(dyadic_pieces(u, spec, partition))
    pv = dict(dyadic_pieces(v, spec, partition))
    total = 0.0
    for j in pu.keys() & pv.keys():
        total += 2.0 ** ((spec.delta + d / 2) * 2 * j) * hs_inner(pu[j], pv[j], spec.s)
    return total
