"""Method-of-lines RK4 for quasilinear symmetric hyperbolic systems.

    A0(U;t) dU/dt + sum_a A^a(U;t) d_a U + B(U;t) U = G(U;t)

on a uniform (periodic) grid with spectral derivatives. Products are formed
pointwise and the right-hand side is dealiased before every RK stage update.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field as dc_field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import fft as sfft

from .norms import hs_norm, multi_indices
from .spectral import Grid, RealField, derivative, trig_interpolant_1d

__all__ = [
    "SystemModel",
    "Trajectory",
    "SymmetryReport",
    "SolverError",
    "CFLViolation",
    "PositivityLoss",
    "NaNDetected",
    "solve",
    "rhs",
    "check_symmetry_positivity",
    "weighted_energy",
    "burgers_characteristics_oracle",
    "burgers_system",
    "advection_system",
    "C_CFL",
    "SENTINEL_FACTOR",
]

C_CFL = 0.4
SENTINEL_FACTOR = 1e3
A0_EIG_TOL = 1e-12

# Evaluators take (U values of shape (N, *grid.shape), t, aux, grid); aux is the
# co-integrated ODE state (or None). Matrix fields have shape (N, N, *grid.shape).
Evaluator = Callable[[np.ndarray, float, Any, Grid], Any]


class SolverError(RuntimeError):
    pass


class CFLViolation(SolverError):
    pass


class PositivityLoss(SolverError):
    pass


class NaNDetected(SolverError):
    pass


@dataclass(frozen=True)
class SystemModel:
    """Coefficient evaluators of one symmetric hyperbolic system.

    ``flux`` returns the d matrices A^a. ``a0``, ``b`` and ``g`` default to the
    identity, zero and zero. ``aux0``/``aux_rhs`` describe an ODE integrated
    alongside the PDE (the cosmological background); ``aux_at(t)`` gives its
    value at arbitrary times for diagnostics outside a solve. ``invariant``
    returns a message when a state leaves the model's admissible set.
    """

    name: str
    components: int
    dim: int
    flux: Evaluator
    a0: Evaluator | None = None
    b: Evaluator | None = None
    g: Evaluator | None = None
    aux0: np.ndarray | None = None
    aux_rhs: Callable[[float, np.ndarray], np.ndarray] | None = None
    aux_at: Callable[[float], np.ndarray] | None = None
    invariant: Evaluator | None = None
    diagnostics: Evaluator | None = None
    flux_vanishes_at_zero: bool = False
    metadata: dict = dc_field(default_factory=dict)

    def aux_value(self, t: float, aux=None):
        if aux is not None:
            return aux
        if self.aux_at is not None:
            return self.aux_at(t)
        return self.aux0

    def a0_field(self, u: np.ndarray, t: float, aux, grid: Grid) -> np.ndarray:
        if self.a0 is None:
            eye = np.eye(self.components).reshape((self.components, self.components) + (1,) * grid.dim)
            return np.broadcast_to(eye, (self.components, self.components) + grid.shape)
        return self.a0(u, t, aux, grid)


@dataclass
class Trajectory:
    """Recorded samples of one solve. ``status`` is 'ok', 'blowup' or 'invariant'."""

    grid: Grid
    times: list[float] = dc_field(default_factory=list)
    states: list[RealField] = dc_field(default_factory=list)
    diagnostics: list[dict] = dc_field(default_factory=list)
    aux: list = dc_field(default_factory=list)
    status: str = "ok"
    message: str = ""
    dt: float = 0.0

    @property
    def completed(self) -> bool:
        return self.status == "ok"

    @property
    def final(self) -> RealField:
        return self.states[-1]

    def interpolate(self, t: float) -> RealField:
        """Piecewise-linear interpolation between recorded states."""
        times = self.times
        if t <= times[0]:
            return self.states[0]
        if t >= times[-1]:
            return self.states[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        return RealField(self.grid, (1 - w) * self.states[i].values + w * self.states[i + 1].values)

    def interpolate_aux(self, t: float):
        if not self.aux or self.aux[0] is None:
            return None
        times = self.times
        if t <= times[0]:
            return self.aux[0]
        if t >= times[-1]:
            return self.aux[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        return (1 - w) * np.asarray(self.aux[i]) + w * np.asarray(self.aux[i + 1])


# --- pointwise linear algebra -------------------------------------------------


def _matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,j...->i...", m, v)


def _to_batch(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    return np.moveaxis(m.reshape(n, n, -1), -1, 0)


def _diagonal_or_none(m: np.ndarray):
    """The diagonal of a pointwise matrix field if all off-diagonal entries vanish."""
    n = m.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.any(m[off]):
        return None
    return np.stack([m[i, i] for i in range(n)])


def _solve_pointwise(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    diag = _diagonal_or_none(m)
    if diag is not None:
        return v / diag
    n = v.shape[0]
    shape = v.shape[1:]
    mb = _to_batch(m)
    vb = v.reshape(n, -1).T[..., None]
    return np.linalg.solve(mb, vb)[..., 0].T.reshape((n,) + shape)


@lru_cache(maxsize=32)
def _real_modes(grid: Grid, rule: float):
    """ik per axis (Nyquist dropped) and the dealiasing mask, laid out for rfftn."""
    n = grid.points
    ik, keep = [], np.ones((), dtype=bool)
    for a in range(grid.dim):
        m = sfft.rfftfreq(n, 1.0 / n) if a == grid.dim - 1 else sfft.fftfreq(n, 1.0 / n)
        shape = [1] * grid.dim
        shape[a] = m.size
        m = m.reshape(shape)
        k = 2 * np.pi * m / grid.box_length[a]
        ik.append(np.where(np.abs(m) == n / 2, 0.0, 1j * k))
        keep = keep & (np.abs(m) <= rule * n / 2)
    return ik, keep


def _spectral_derivatives(u: np.ndarray, grid: Grid) -> list[np.ndarray]:
    axes = tuple(range(1, grid.dim + 1))
    c = sfft.rfftn(u, axes=axes)
    ik, _ = _real_modes(grid, 1.0)
    return [sfft.irfftn(c * m, s=grid.shape, axes=axes) for m in ik]


def _dealias_values(v: np.ndarray, grid: Grid, rule: float) -> np.ndarray:
    if rule >= 1:
        return v
    axes = tuple(range(1, grid.dim + 1))
    _, keep = _real_modes(grid, rule)
    return sfft.irfftn(sfft.rfftn(v, axes=axes) * keep, s=grid.shape, axes=axes)


def rhs(system: SystemModel, u: np.ndarray, t: float, aux, grid: Grid, rule: float = 2.0 / 3.0, derivs=None):
    """(A0)^{-1} [G - B U - sum_a A^a d_a U], dealiased."""
    if derivs is None:
        derivs = _spectral_derivatives(u, grid)
    flux = system.flux(u, t, aux, grid)
    out = np.zeros_like(u)
    for a_mat, du in zip(flux, derivs):
        out -= _matvec(a_mat, du)
    if system.b is not None:
        out -= _matvec(system.b(u, t, aux, grid), u)
    if system.g is not None:
        out += system.g(u, t, aux, grid)
    if system.a0 is not None:
        out = _solve_pointwise(system.a0(u, t, aux, grid), out)
    return _dealias_values(out, grid, rule)


def _a0_whitening(system: SystemModel, u, t, aux, grid):
    """Map M -> W M W^T with W A0 W^T = Id; None when A0 is the identity.

    Raises PositivityLoss when A0 fails to be positive definite.
    """
    if system.a0 is None:
        return None
    m = system.a0(u, t, aux, grid)
    diag = _diagonal_or_none(m)
    if diag is not None:
        if np.min(diag) <= A0_EIG_TOL:
            raise PositivityLoss(f"A0 eigenvalue below {A0_EIG_TOL:g} at t = {t:.6g}")
        w = diag.reshape(diag.shape[0], -1).T ** -0.5
        return lambda mb: mb * w[:, :, None] * w[:, None, :]
    try:
        chol = np.linalg.cholesky(_to_batch(m))
    except np.linalg.LinAlgError as exc:
        raise PositivityLoss(f"A0 is not positive definite at t = {t:.6g}") from exc
    if np.min(np.diagonal(chol, axis1=-2, axis2=-1)) ** 2 <= A0_EIG_TOL:
        raise PositivityLoss(f"A0 eigenvalue below {A0_EIG_TOL:g} at t = {t:.6g}")
    linv = np.linalg.inv(chol)
    return lambda mb: linv @ mb @ np.swapaxes(linv, -1, -2)


def max_wave_speed(system: SystemModel, u: np.ndarray, t: float, aux, grid: Grid) -> float:
    """max over nodes and axes of |lambda| for det(A^a - lambda A0) = 0."""
    whiten = _a0_whitening(system, u, t, aux, grid)
    speed = 0.0
    for a_mat in system.flux(u, t, aux, grid):
        mb = _to_batch(a_mat)
        if whiten is not None:
            mb = whiten(mb)
        if mb.shape[-1] == 1:
            lam = np.abs(mb[..., 0, 0])
        else:
            lam = np.abs(np.linalg.eigvalsh(0.5 * (mb + np.swapaxes(mb, -1, -2))))
        speed = max(speed, float(np.max(lam)) if lam.size else 0.0)
    return speed


def _check_cfl(system, u, t, aux, grid, dt, c_cfl):
    speed = max_wave_speed(system, u, t, aux, grid)
    if speed > 0:
        limit = c_cfl * min(grid.spacing) / speed
        if dt > limit * (1 + 1e-12):
            raise CFLViolation(f"dt = {dt:.4g} exceeds the CFL limit {limit:.4g} at t = {t:.6g}")


def _diagnose(system, u: RealField, t, aux, s_diag, energy_order):
    rec = {
        "t": t,
        "hs_norm": hs_norm(u, s_diag),
        "sup": u.sup(),
        "integrals": [float(x) for x in u.integral()],
    }
    if energy_order is not None:
        rec["energy"] = weighted_energy(u, system, t, energy_order, aux=aux)
    if system.diagnostics is not None:
        rec.update(system.diagnostics(u.values, t, aux, u.grid))
    return rec


def solve(
    system: SystemModel,
    u0: RealField,
    T: float,
    dt: float,
    s_diag: float = 0.0,
    record_every: int = 1,
    dealias_rule: float = 2.0 / 3.0,
    c_cfl: float = C_CFL,
    sentinel: float = SENTINEL_FACTOR,
    energy_order: int | None = None,
) -> Trajectory:
    """Classical RK4 with fixed step on [0, T].

    The step count is ceil(T/dt) and the step is shortened to land on T.
    CFL, positive definiteness of A0 and finiteness are checked every step
    (violations raise). The blow-up sentinel (sup|U| or sup|dU| beyond
    ``sentinel`` times the initial value) and model invariant breaches stop
    the run and return the partial trajectory with a status flag.
    """
    grid = u0.grid
    if u0.components != system.components or grid.dim != system.dim:
        raise ValueError(f"initial data does not match the {system.name} model")
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    steps = max(1, math.ceil(T / dt - 1e-9)) if T > 0 else 0
    h = T / steps if steps else dt
    u = u0.values.copy()
    aux = None if system.aux0 is None else np.array(system.aux0, dtype=float)

    def stage(v, tt, ax, derivs=None):
        dv = rhs(system, v, tt, ax, grid, dealias_rule, derivs)
        da = None if ax is None else np.asarray(system.aux_rhs(tt, ax), dtype=float)
        return dv, da

    traj = Trajectory(grid=grid, dt=h)

    def record(v, tt, ax):
        f = RealField(grid, v)
        traj.times.append(tt)
        traj.states.append(f)
        traj.aux.append(None if ax is None else ax.copy())
        traj.diagnostics.append(_diagnose(system, f, tt, ax, s_diag, energy_order))

    record(u, 0.0, aux)
    derivs = _spectral_derivatives(u, grid)
    sup0 = float(np.max(np.abs(u)))
    grad0 = max((float(np.max(np.abs(d))) for d in derivs), default=0.0)
    u_limit = sentinel * sup0 if sup0 > 0 else math.inf
    g_limit = sentinel * grad0 if grad0 > 0 else math.inf

    for n in range(steps):
        t = n * h
        _check_cfl(system, u, t, aux, grid, h, c_cfl)
        k1, a1 = stage(u, t, aux, derivs)
        k2, a2 = stage(u + 0.5 * h * k1, t + 0.5 * h, None if aux is None else aux + 0.5 * h * a1)
        k3, a3 = stage(u + 0.5 * h * k2, t + 0.5 * h, None if aux is None else aux + 0.5 * h * a2)
        k4, a4 = stage(u + h * k3, t + h, None if aux is None else aux + h * a3)
        u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if aux is not None:
            aux = aux + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        t_new = (n + 1) * h
        if not np.all(np.isfinite(u)):
            raise NaNDetected(f"non-finite values at t = {t_new:.6g}")
        derivs = _spectral_derivatives(u, grid)
        sup = float(np.max(np.abs(u)))
        grad = max((float(np.max(np.abs(d))) for d in derivs), default=0.0)
        if sup > u_limit or grad > g_limit:
            traj.status = "blowup"
            traj.message = f"sentinel fired at t = {t_new:.6g} (sup {sup:.3g}, grad {grad:.3g})"
            return traj
        if system.invariant is not None:
            msg = system.invariant(u, t_new, aux, grid)
            if msg:
                traj.status = "invariant"
                traj.message = f"t = {t_new:.6g}: {msg}"
                return traj
        if (n + 1) % record_every == 0 or n + 1 == steps:
            record(u, t_new, aux)
    return traj


# --- diagnostics ----------------------------------------------------------------


@dataclass(frozen=True)
class SymmetryReport:
    flux_asymmetry: tuple[float, ...]
    a0_asymmetry: float
    a0_min_eig: float
    a0_max_eig: float
    flux_at_zero: float | None

    @property
    def constant(self) -> float:
        """Smallest C with C^{-1}|v|^2 <= v.A0 v <= C|v|^2 at the sampled nodes."""
        if self.a0_min_eig <= 0:
            return math.inf
        return max(self.a0_max_eig, 1.0 / self.a0_min_eig)


def check_symmetry_positivity(system: SystemModel, state: RealField, t: float, aux=None) -> SymmetryReport:
    grid = state.grid
    aux = system.aux_value(t, aux)
    u = state.values
    flux = system.flux(u, t, aux, grid)
    asym = tuple(float(np.max(np.abs(a - np.swapaxes(a, 0, 1)))) for a in flux)
    a0 = np.asarray(system.a0_field(u, t, aux, grid))
    a0_asym = float(np.max(np.abs(a0 - np.swapaxes(a0, 0, 1))))
    eig = np.linalg.eigvalsh(_to_batch(0.5 * (a0 + np.swapaxes(a0, 0, 1))))
    at_zero = None
    if system.flux_vanishes_at_zero:
        zero = np.zeros_like(u)
        at_zero = max(float(np.max(np.abs(a))) for a in system.flux(zero, t, aux, grid))
    return SymmetryReport(asym, a0_asym, float(eig.min()), float(eig.max()), at_zero)


def weighted_energy(state: RealField, system: SystemModel, t: float, m: int, aux=None) -> float:
    """E_m = sum_{|alpha| <= m} integral d^alpha U . A0 d^alpha U dx."""
    if m < 0:
        raise ValueError("m must be non-negative")
    grid = state.grid
    aux = system.aux_value(t, aux)
    a0 = system.a0_field(state.values, t, aux, grid) if system.a0 is not None else None
    total = 0.0
    for alpha in multi_indices(grid.dim, int(m)):
        d = derivative(state, alpha).values
        if a0 is None:
            total += float(np.sum(d * d))
        else:
            total += float(np.sum(d * _matvec(a0, d)))
    return total * grid.cell_volume


# --- Burgers reference ----------------------------------------------------------


def burgers_characteristics_oracle(u0: RealField, t: float, tol: float = 1e-14, max_iter: int = 100) -> RealField:
    """u(t, x) = u0(xi) with x = xi + t u0(xi), solved node by node.

    Newton on the trigonometric interpolant of u0, safeguarded by the bracket
    |xi - x| <= t sup|u0| (bisection whenever a Newton step leaves it).
    """
    grid = u0.grid
    if grid.dim != 1 or u0.components != 1:
        raise ValueError("the characteristics oracle is for scalar 1-D data")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return u0
    value, slope = trig_interpolant_1d(u0)
    fine = np.linspace(grid.origin[0], grid.origin[0] + grid.box_length[0], 16 * grid.points, endpoint=False)
    steepest = float(np.max(-slope(fine)))
    if steepest > 0 and t >= 1.0 / steepest:
        raise ValueError(f"t = {t:g} is past the shock time {1.0 / steepest:.6g}")
    x = grid.axes[0]
    reach = t * float(np.max(np.abs(value(fine)))) + 1e-12
    lo, hi = x - reach, x + reach
    xi = x - t * u0.values[0]
    for _ in range(max_iter):
        f = xi + t * value(xi) - x
        lo = np.where(f < 0, xi, lo)
        hi = np.where(f > 0, xi, hi)
        step = f / (1.0 + t * slope(xi))
        cand = xi - step
        outside = (cand <= lo) | (cand >= hi)
        cand = np.where(outside, 0.5 * (lo + hi), cand)
        done = np.max(np.abs(cand - xi)) < tol * max(1.0, float(np.max(np.abs(x))))
        xi = cand
        if done:
            break
    else:
        raise SolverError("characteristics Newton iteration did not converge")
    return RealField(grid, value(xi))


# --- elementary models -----------------------------------------------------------


def burgers_system() -> SystemModel:
    """Inviscid Burgers u_t + u u_x = 0 (N = 1, d = 1, A^1 = u)."""

    def flux(u, t, aux, grid):
        return [u[None, ...]]

    return SystemModel("burgers", 1, 1, flux, flux_vanishes_at_zero=True)


def advection_system(velocity: Sequence[float], components: int = 1) -> SystemModel:
    """Constant-coefficient transport, A^a = c_a Id."""
    velocity = tuple(float(c) for c in velocity)
    eye = np.eye(components)

    def flux(u, t, aux, grid):
        shape = (components, components) + (1,) * grid.dim
        return [np.broadcast_to((c * eye).reshape(shape), (components, components) + grid.shape) for c in velocity]

    return SystemModel("advection", components, len(velocity), flux, metadata={"velocity": velocity})
