"""Empirical constants for the calculus inequalities and the energy lemmas.

Every ratio function returns LHS / RHS-without-constant for one sample; the
suite collects maxima over seeded samples at two resolutions and reports
whether the maxima are stable under grid doubling.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .norms import NormSpec, hs_norm, weighted_norm
from .solver import SystemModel, Trajectory
from .spectral import Grid, RealField, gradient, lambda_s, partial_derivative, random_band_limited, smooth_bump

__all__ = [
    "IndexConstraintError",
    "kato_ponce_ratio",
    "multiplication_ratio",
    "improved_multiplication_ratio",
    "power_estimate_ratio",
    "nonlinear_power_ratio",
    "difference_estimate_ratio",
    "gronwall_bound",
    "gronwall_check",
    "EnergyMargin",
    "energy_inequality_margin",
    "frozen_linear_system",
    "lipschitz_estimate",
    "run_estimate_suite",
    "STABILITY_TOL",
]

STABILITY_TOL = 0.25


class IndexConstraintError(ValueError):
    """The indices violate the hypotheses of the estimate being sampled."""


def _safe_ratio(num: float, den: float, what: str) -> float:
    if num == 0:
        return 0.0
    if den == 0:
        raise ZeroDivisionError(f"{what}: zero right-hand side with nonzero left-hand side")
    return num / den


# --- calculus inequalities ----------------------------------------------------


def kato_ponce_ratio(s: float, f: RealField, g: RealField, axis: int = 0) -> float:
    """||P(fg) - f P(g)||_{L^2} / (||Df||_inf ||g||_{H^{s-1}} + ||f||_{H^s} ||g||_inf).

    P = Lambda^{s-1} d_axis, an operator of order s.
    """
    if f.grid != g.grid:
        raise ValueError("f and g live on different grids")

    def P(u):
        return lambda_s(partial_derivative(u, axis), s - 1)

    comm = P(f * g) - f * P(g)
    lhs = hs_norm(comm, 0.0)
    grad = np.sqrt(sum(d.values**2 for d in gradient(f)))
    bracket = float(np.max(grad)) * hs_norm(g, s - 1) + hs_norm(f, s) * g.sup()
    return _safe_ratio(lhs, bracket, "kato_ponce_ratio")


def _check_multiplication_indices(d, s, s1, s2, weighted):
    if not s <= min(s1, s2):
        raise IndexConstraintError(f"need s <= min(s1, s2), got s={s}, s1={s1}, s2={s2}")
    if not s + d / 2 < s1 + s2:
        raise IndexConstraintError(f"need s + d/2 < s1 + s2, got {s + d / 2} >= {s1 + s2}")
    if not 0 <= s1 + s2:
        raise IndexConstraintError("need 0 <= s1 + s2")
    if weighted is not None:
        delta, d1, d2 = weighted
        if not delta - d / 2 <= d1 + d2:
            raise IndexConstraintError(f"need delta - d/2 <= delta1 + delta2, got {delta - d / 2} > {d1 + d2}")


def multiplication_ratio(
    u: RealField,
    v: RealField,
    s: float,
    s1: float,
    s2: float,
    weighted: tuple[float, float, float] | None = None,
    j_max: int = 6,
) -> float:
    """||uv||_s / (||u||_s1 ||v||_s2), plain H^s or, with (delta, delta1, delta2), H_{s,delta}."""
    _check_multiplication_indices(u.grid.dim, s, s1, s2, weighted)
    prod = u * v
    if weighted is None:
        num = hs_norm(prod, s)
        den = hs_norm(u, s1) * hs_norm(v, s2)
    else:
        delta, d1, d2 = weighted
        num = weighted_norm(prod, NormSpec(s, delta, j_max))
        den = weighted_norm(u, NormSpec(s1, d1, j_max)) * weighted_norm(v, NormSpec(s2, d2, j_max))
    return _safe_ratio(num, den, "multiplication_ratio")


def improved_multiplication_ratio(
    factors: Sequence[RealField], s: float, deltas: Sequence[float], delta: float, j_max: int = 6
) -> float:
    """||u_1...u_m||_{s,delta} / prod ||u_i||_{s,delta_i} for s > d/2, delta <= sum delta_i + (m-1) d/2."""
    d = factors[0].grid.dim
    m = len(factors)
    if len(deltas) != m:
        raise ValueError("one weight index per factor")
    if not s > d / 2:
        raise IndexConstraintError(f"need s > d/2, got s={s}")
    if not delta <= sum(deltas) + (m - 1) * d / 2:
        raise IndexConstraintError("need delta <= delta_1 + ... + delta_m + (m-1) d/2")
    prod = factors[0]
    for f in factors[1:]:
        prod = prod * f
    num = weighted_norm(prod, NormSpec(s, delta, j_max))
    den = math.prod(weighted_norm(f, NormSpec(s, di, j_max)) for f, di in zip(factors, deltas))
    return _safe_ratio(num, den, "improved_multiplication_ratio")


def power_estimate_ratio(
    u: RealField, beta: float, s: float, weighted: float | None = None, j_max: int = 6, check_range: bool = True
) -> float:
    """|| |u|^beta || / ||u|| in H^s (0 < s < beta + 1/2) or H_{s,delta} (d/2 < s < beta + 1/2)."""
    d = u.grid.dim
    if np.any(u.values < 0):
        raise ValueError("power estimate samples must be non-negative")
    if check_range:
        lower = 0.0 if weighted is None else d / 2
        if not (lower < s < beta + 0.5):
            raise IndexConstraintError(f"need {lower} < s < beta + 1/2 = {beta + 0.5}, got s={s}")
    if beta == 1:
        return 1.0 if np.any(u.values) else 0.0
    p = u.with_values(np.abs(u.values) ** beta)
    if weighted is None:
        return _safe_ratio(hs_norm(p, s), hs_norm(u, s), "power_estimate_ratio")
    spec = NormSpec(s, weighted, j_max)
    return _safe_ratio(weighted_norm(p, spec), weighted_norm(u, spec), "power_estimate_ratio")


def nonlinear_power_ratio(w: RealField, beta: int, s: float, delta: float, j_max: int = 6) -> float:
    """||w^(beta-1)||_{H_{s-1,delta+1}} / ||w||_{H_{s,delta}}^(beta-1) for integer beta >= 3.

    Hypotheses: 3/2 < s and 1/(beta-2) - 3/2 <= delta.
    """
    if int(beta) != beta or beta < 3:
        raise IndexConstraintError("need an integer beta >= 3")
    if not s > 1.5:
        raise IndexConstraintError("need s > 3/2")
    if not delta >= 1.0 / (beta - 2) - 1.5:
        raise IndexConstraintError(f"need delta >= 1/(beta-2) - 3/2 = {1.0 / (beta - 2) - 1.5}")
    if np.any(w.values < 0):
        raise ValueError("w must be non-negative")
    num = weighted_norm(w.with_values(w.values ** (beta - 1)), NormSpec(s - 1, delta + 1, j_max))
    den = weighted_norm(w, NormSpec(s, delta, j_max)) ** (beta - 1)
    return _safe_ratio(num, den, "nonlinear_power_ratio")


def difference_estimate_ratio(F: Callable[[np.ndarray], np.ndarray], u: RealField, v: RealField, s: float) -> float:
    """||F(u) - F(v)||_s / ((1 + ||u||_s + ||v||_s) ||u - v||_s); 0 when u = v."""
    diff = u - v
    dn = hs_norm(diff, s)
    if dn == 0:
        return 0.0
    num = hs_norm(u.with_values(F(u.values) - F(v.values)), s)
    return num / ((1.0 + hs_norm(u, s) + hs_norm(v, s)) * dn)


# --- Gronwall -------------------------------------------------------------------


def gronwall_bound(t: np.ndarray, y0: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """e^{int_0^t a} (y0 + int_0^t b) by trapezoidal quadrature."""
    t = np.asarray(t, dtype=float)
    A = cumulative_trapezoid(a, t, initial=0.0)
    B = cumulative_trapezoid(b, t, initial=0.0)
    return np.exp(A) * (y0 + B)


def gronwall_check(t, y, a, b, tol: float = 1e-8) -> bool:
    """y(t) <= e^{int a}(y(0) + int b) at every sample, up to ``tol`` relative."""
    t, y, a, b = (np.asarray(x, dtype=float) for x in (t, y, a, b))
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("a and b must be non-negative")
    bound = gronwall_bound(t, y[0], a, b)
    return bool(np.all(y <= bound + tol * np.maximum(1.0, np.abs(bound))))


# --- energy lemmas ----------------------------------------------------------------


def _matrix_hs_norm(m: np.ndarray, grid: Grid, s: float) -> float:
    n = m.shape[0]
    return hs_norm(RealField(grid, np.reshape(m, (n * n,) + grid.shape)), s)


def frozen_linear_system(
    system: SystemModel, reference: Trajectory, forcing: Callable[[float, Grid], np.ndarray] | None = None
) -> SystemModel:
    """The linear system A0(t,x) d_t U + A^a(t,x) d_a U = F(t,x).

    Coefficients are the nonlinear model's matrices evaluated on the reference
    trajectory (linear in time between recorded samples); B and G are dropped.
    """

    def ref(t):
        return reference.interpolate(t).values, system.aux_value(t, reference.interpolate_aux(t))

    def flux(u, t, aux, grid):
        r, ax = ref(t)
        return system.flux(r, t, ax, grid)

    a0 = None
    if system.a0 is not None:

        def a0(u, t, aux, grid):
            r, ax = ref(t)
            return system.a0(r, t, ax, grid)

    g = None
    if forcing is not None:

        def g(u, t, aux, grid):
            return forcing(t, grid)

    return SystemModel(
        name=f"{system.name}_frozen",
        components=system.components,
        dim=system.dim,
        flux=flux,
        a0=a0,
        g=g,
        metadata={"frozen_from": system.name, "forcing": forcing is not None},
    )


@dataclass
class EnergyMargin:
    c_min: float
    times: np.ndarray
    y: np.ndarray
    required: np.ndarray = dc_field(repr=False)
    bound: np.ndarray = dc_field(repr=False)
    coefficient_integral: np.ndarray = dc_field(repr=False)
    uncharged_integral: np.ndarray = dc_field(repr=False)

    def bound_for(self, c: float) -> np.ndarray:
        return self.bound[0] * np.exp(c * self.coefficient_integral + self.uncharged_integral)

    def holds(self, c: float, rtol: float = 1e-12) -> bool:
        return bool(np.all(self.y <= self.bound_for(c) * (1 + rtol)))


def energy_inequality_margin(
    traj: Trajectory,
    system: SystemModel,
    s: float,
    forcing: Callable[[float, Grid], np.ndarray] | None = None,
    standard: bool = False,
    dt_probe: float | None = None,
) -> EnergyMargin:
    """Smallest C for which the energy lemma's bound holds along ``traj``.

    With A0 = Id: ||U(t)||^2 <= exp(int a)(||u0||^2 + int ||F||^2),
    a = C sum_a ||A^a||_{H^s} + 1. With A0 != Id: a = C ||A0||_{H^s} sum_a
    ||A^a||_{H^s} + ||d_t A0||_inf. The solution norm is H^{s-1} (low
    regularity lemma) or H^s (``standard``). Writing the exponent as
    C S(t) + N(t), C_min = max(0, max_t (log(y / base) - N) / S).
    """
    grid = traj.grid
    times = np.asarray(traj.times, dtype=float)
    order = s if standard else s - 1
    y = np.array([hs_norm(u, order) ** 2 for u in traj.states])
    has_a0 = system.a0 is not None
    coef = np.zeros_like(times)
    uncharged = np.ones_like(times) if not has_a0 else np.zeros_like(times)
    f_norm = np.zeros_like(times)
    h = dt_probe if dt_probe is not None else max(traj.dt, 1e-6) * 1e-2
    for i, (t, u) in enumerate(zip(times, traj.states)):
        aux = system.aux_value(t, traj.aux[i] if traj.aux else None)
        flux_sum = sum(_matrix_hs_norm(np.asarray(m), grid, s) for m in system.flux(u.values, t, aux, grid))
        if has_a0:
            a0 = system.a0(u.values, t, aux, grid)
            coef[i] = _matrix_hs_norm(np.asarray(a0), grid, s) * flux_sum
            lo, hi = max(t - h, times[0]), min(t + h, times[-1])
            if hi > lo:
                aux_lo = system.aux_value(lo, traj.interpolate_aux(lo))
                aux_hi = system.aux_value(hi, traj.interpolate_aux(hi))
                d0 = (system.a0(traj.interpolate(hi).values, hi, aux_hi, grid)
                      - system.a0(traj.interpolate(lo).values, lo, aux_lo, grid)) / (hi - lo)
                uncharged[i] = float(np.max(np.abs(d0)))
        else:
            coef[i] = flux_sum
        if forcing is not None:
            f_norm[i] = hs_norm(RealField(grid, forcing(t, grid)), order) ** 2
    S = cumulative_trapezoid(coef, times, initial=0.0)
    N = cumulative_trapezoid(uncharged, times, initial=0.0)
    base = y[0] + cumulative_trapezoid(f_norm, times, initial=0.0)
    required = np.zeros_like(times)
    for i in range(len(times)):
        if y[i] == 0:
            continue
        excess = math.log(y[i] / base[i]) - N[i]
        if excess <= 1e-12 * max(1.0, abs(N[i])):
            continue
        if S[i] <= 0:
            raise ValueError(f"energy inequality fails at t = {times[i]:.4g} for every finite C")
        required[i] = excess / S[i]
    c_min = float(max(0.0, required.max(initial=0.0)))
    return EnergyMargin(c_min, times, y, required, base, S, N)


def lipschitz_estimate(
    system: SystemModel,
    grid: Grid,
    s: float,
    samples: int = 20,
    radius: float = 0.1,
    base: RealField | None = None,
    seed: int = 0,
    t: float = 0.0,
) -> float:
    """max ||grad G(u) - grad G(v)||_{H^{s-1}} / ||u - v||_{H^{s-1}} over seeded pairs near ``base``."""
    if system.g is None:
        return 0.0
    base = base if base is not None else grid.zeros(system.components)
    aux = system.aux_value(t)
    k_cut = max(1, min(4, grid.points // 2 - 1))
    best = 0.0
    for i in range(samples):
        du = random_band_limited(grid, system.components, seed=seed + 2 * i, k_cut=k_cut, amplitude=radius)
        dv = random_band_limited(grid, system.components, seed=seed + 2 * i + 1, k_cut=k_cut, amplitude=radius)
        u, v = base + du, base + dv
        diff_g = RealField(grid, system.g(u.values, t, aux, grid) - system.g(v.values, t, aux, grid))
        num = math.sqrt(sum(hs_norm(d, s - 1) ** 2 for d in gradient(diff_g)))
        den = hs_norm(u - v, s - 1)
        best = max(best, num / den if den > 0 else 0.0)
    return best


# --- the suite ---------------------------------------------------------------------


def _bump_sum(grid: Grid, rng: np.random.Generator, count: int = 3, spread: float = 2.0, radii=(1.0, 3.0)) -> RealField:
    total = np.zeros(grid.shape)
    for _ in range(count):
        c = rng.uniform(-spread, spread, size=grid.dim)
        r = rng.uniform(*radii)
        total += smooth_bump(grid, c, r, rng.uniform(0.5, 1.5)).values[0]
    return RealField(grid, total)


def _estimate_families(n: int, samples: int, seed: int):
    """Name -> list of per-sample ratio thunks on a grid of n (torus) / 16n (weighted) points."""
    torus = Grid(1, n, 2 * math.pi)
    line = Grid(1, 16 * n, 32.0, periodic=False)
    fam: dict[str, list[Callable[[], float]]] = {k: [] for k in (
        "kato_ponce", "multiplication", "multiplication_weighted", "multiplication_improved",
        "power", "power_weighted", "power_nonlinear", "difference")}
    j_max = 4
    for i in range(samples):
        sd = seed + 1000 * i
        f = random_band_limited(torus, seed=sd, k_cut=8)
        g = random_band_limited(torus, seed=sd + 1, k_cut=8)
        fam["kato_ponce"].append(lambda f=f, g=g: kato_ponce_ratio(3.0, f, g))
        fam["multiplication"].append(lambda f=f, g=g: multiplication_ratio(f, g, 1.0, 1.0, 1.0))
        pos = random_band_limited(torus, seed=sd + 2, k_cut=6) + 1.5
        fam["power"].append(lambda p=pos: power_estimate_ratio(p, 4.0, 2.0))
        fam["difference"].append(lambda f=f, g=g: difference_estimate_ratio(lambda x: x**3, f, g, 2.0))
        rng = np.random.default_rng(sd)
        a, b = _bump_sum(line, rng), _bump_sum(line, rng)
        fam["multiplication_weighted"].append(
            lambda a=a, b=b: multiplication_ratio(a, b, 1.0, 1.0, 1.0, weighted=(0.0, 0.0, 0.0), j_max=j_max))
        fam["multiplication_improved"].append(
            lambda a=a, b=b: improved_multiplication_ratio([a, b], 1.0, [0.0, 0.0], 0.5, j_max=j_max))
        fam["power_weighted"].append(lambda a=a: power_estimate_ratio(a, 4.0, 1.0, weighted=0.0, j_max=j_max))
        fam["power_nonlinear"].append(lambda a=a: nonlinear_power_ratio(a, 4, 2.0, 0.0, j_max=j_max))
    return fam


def run_estimate_suite(n: int = 64, samples: int = 100, seed: int = 0, names: Sequence[str] | None = None) -> dict:
    """Max ratios at resolution n and 2n for every estimate family, with stability verdicts."""
    start = time.perf_counter()
    coarse = _estimate_families(n, samples, seed)
    fine = _estimate_families(2 * n, samples, seed)
    report = {"seed": seed, "samples": samples, "points": [n, 2 * n], "estimates": {}}
    for name in names or coarse:
        r1 = np.array([f() for f in coarse[name]])
        r2 = np.array([f() for f in fine[name]])
        m1, m2 = float(r1.max()), float(r2.max())
        change = abs(m2 - m1) / m1 if m1 > 0 else (0.0 if m2 == 0 else math.inf)
        report["estimates"][name] = {
            "max_ratio": m1,
            "max_ratio_refined": m2,
            "relative_change": change,
            "finite": bool(np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))),
            "stable": bool(change < STABILITY_TOL),
            "samples": int(r1.size),
        }
    report["runtime_seconds"] = time.perf_counter() - start
    return report
