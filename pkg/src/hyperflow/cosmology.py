"""Homogeneous Newtonian cosmology and the comoving perturbation system.

Background: R'' = -(4 pi/3) R^-2 (mass constant C = 1), rho_hat = R^-3.
Perturbations U = (sigma, V^1..V^d) on the torus in comoving coordinates:

    A0 d_t U + sum_k A^k d_k U + B U = G,    Delta Phi = 4 pi R^2 sigma,

with A0 = diag(g'/(rho_hat+sigma)^2, 1, ..., 1) and g' = f'(rho_hat + sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .elliptic import grad_inv_laplacian
from .solver import SystemModel
from .spectral import RealField

__all__ = [
    "BackgroundState",
    "BackgroundCurve",
    "EosModel",
    "CollapseError",
    "FOUR_PI_THIRDS",
    "EDS_RDOT",
    "background_acceleration",
    "integrate_background",
    "einstein_de_sitter",
    "cosmo_system",
]

FOUR_PI_THIRDS = 4.0 * math.pi / 3.0
# expansion rate of the zero-energy (critical) background with R0 = 1
EDS_RDOT = math.sqrt(2.0 * FOUR_PI_THIRDS)


class CollapseError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackgroundState:
    t: float
    R: float
    Rdot: float
    C_mass: float = 1.0

    @property
    def rho_hat(self) -> float:
        return self.C_mass / self.R**3

    @property
    def energy(self) -> float:
        """First integral Rdot^2/2 - (4 pi/3) C / R."""
        return 0.5 * self.Rdot**2 - FOUR_PI_THIRDS * self.C_mass / self.R

    @property
    def hubble(self) -> float:
        return self.Rdot / self.R


def background_acceleration(R: float, C_mass: float = 1.0) -> float:
    return -FOUR_PI_THIRDS * C_mass / R**2


def _background_rhs(y: np.ndarray, C_mass: float = 1.0) -> np.ndarray:
    return np.array([y[1], background_acceleration(y[0], C_mass)])


def integrate_background(
    R0: float = 1.0,
    Rdot0: float = EDS_RDOT,
    T: float = 1.0,
    dt: float = 1e-3,
    collapse_radius: float = 1e-6,
    C_mass: float = 1.0,
) -> list[BackgroundState]:
    """RK4 samples of the background on [0, T] (step shortened to land on T)."""
    if not R0 > 0:
        raise ValueError("R0 must be positive")
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    steps = max(1, math.ceil(T / dt - 1e-9)) if T > 0 else 0
    h = T / steps if steps else dt
    y = np.array([R0, Rdot0], dtype=float)
    out = [BackgroundState(0.0, R0, Rdot0, C_mass)]
    for n in range(steps):
        k1 = _background_rhs(y, C_mass)
        k2 = _background_rhs(y + 0.5 * h * k1, C_mass)
        k3 = _background_rhs(y + 0.5 * h * k2, C_mass)
        k4 = _background_rhs(y + h * k3, C_mass)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (n + 1) * h
        if not np.all(np.isfinite(y)) or y[0] <= collapse_radius:
            raise CollapseError(f"background collapses (R <= {collapse_radius:g}) before t = {t:.6g}")
        out.append(BackgroundState(t, float(y[0]), float(y[1]), C_mass))
    return out


def einstein_de_sitter(t: float, Rdot0: float = EDS_RDOT) -> BackgroundState:
    """Closed form R = (1 + 3 Rdot0 t / 2)^(2/3) of the zero-energy background with R0 = 1."""
    base = 1.0 + 1.5 * Rdot0 * t
    return BackgroundState(t, base ** (2.0 / 3.0), Rdot0 * base ** (-1.0 / 3.0))


class BackgroundCurve:
    """Cubic Hermite interpolant of sampled background states (uses R, Rdot, Rddot)."""

    def __init__(self, states: list[BackgroundState]):
        t = np.array([s.t for s in states])
        R = np.array([s.R for s in states])
        Rd = np.array([s.Rdot for s in states])
        Rdd = np.array([background_acceleration(s.R, s.C_mass) for s in states])
        self.states = states
        self._R = CubicHermiteSpline(t, R, Rd)
        self._Rd = CubicHermiteSpline(t, Rd, Rdd)

    def __call__(self, t: float) -> np.ndarray:
        return np.array([float(self._R(t)), float(self._Rd(t))])


@dataclass(frozen=True)
class EosModel:
    """Pressure law p = f(rho); only f' enters the system. Default f = rho^2."""

    f: Callable[[np.ndarray], np.ndarray] = lambda rho: rho**2
    fprime: Callable[[np.ndarray], np.ndarray] = lambda rho: 2.0 * rho
    name: str = "rho^2"

    def g(self, rho_hat, sigma):
        return self.f(rho_hat + sigma) - self.f(rho_hat)

    def gprime(self, rho_hat, sigma):
        return self.fprime(rho_hat + sigma)


def cosmo_system(
    eos: EosModel | None = None,
    background: BackgroundCurve | None = None,
    R0: float = 1.0,
    Rdot0: float = EDS_RDOT,
    dim: int = 3,
) -> SystemModel:
    """The comoving perturbation system.

    Without ``background`` the ODE for (R, Rdot) is integrated alongside the
    PDE with the same RK4 clock; with a curve the solver reads interpolated
    values instead.
    """
    eos = eos or EosModel()
    n = dim + 1

    def bg(t, aux):
        if aux is not None:
            return float(aux[0]), float(aux[1])
        R, Rd = background(t)
        return float(R), float(Rd)

    def factors(u, t, aux):
        R, Rd = bg(t, aux)
        rho = R**-3 + u[0]
        gp = eos.gprime(R**-3, u[0])
        return R, Rd, rho, gp

    def a0(u, t, aux, grid):
        _, _, rho, gp = factors(u, t, aux)
        m = np.zeros((n, n) + grid.shape)
        m[0, 0] = gp / rho**2
        for i in range(1, n):
            m[i, i] = 1.0
        return m

    def flux(u, t, aux, grid):
        R, _, rho, gp = factors(u, t, aux)
        out = []
        for k in range(dim):
            vk = u[1 + k]
            m = np.zeros((n, n) + grid.shape)
            m[0, 0] = gp / rho**2 * vk / R
            m[0, 1 + k] = gp / rho / R
            m[1 + k, 0] = gp / rho / R
            for i in range(1, n):
                m[i, i] = vk / R
            out.append(m)
        return out

    def b(u, t, aux, grid):
        R, Rd, rho, gp = factors(u, t, aux)
        m = np.zeros((n, n) + grid.shape)
        m[0, 0] = 3.0 * (Rd / R) * gp / rho
        for i in range(1, n):
            m[i, i] = Rd / R
        return m

    def g(u, t, aux, grid):
        R, _ = bg(t, aux)
        out = np.zeros_like(u)
        if not np.any(u[0]):
            return out
        src = RealField(grid, 4.0 * math.pi * R**2 * u[0])
        for k, grad in enumerate(grad_inv_laplacian(src, project_mean=True)):
            out[1 + k] = -grad.values[0]
        return out

    def invariant(u, t, aux, grid):
        _, _, rho, gp = factors(u, t, aux)
        if np.min(rho) <= 0:
            return "total density rho_hat + sigma is no longer positive"
        if np.min(gp) <= 0:
            return "g' is no longer positive"
        return None

    def diagnostics(u, t, aux, grid):
        R, Rd = bg(t, aux)
        return {"sigma_mean": float(np.sum(u[0]) * grid.cell_volume), "R": R, "Rdot": Rd}

    def aux_rhs(t, y):
        return _background_rhs(y)

    def aux_at(t):
        if background is not None:
            return None
        if t == 0:
            return np.array([R0, Rdot0])
        last = integrate_background(R0, Rdot0, t, dt=min(1e-3, t))[-1]
        return np.array([last.R, last.Rdot])

    co_integrate = background is None
    return SystemModel(
        name="cosmo",
        components=n,
        dim=dim,
        flux=flux,
        a0=a0,
        b=b,
        g=g,
        aux0=np.array([R0, Rdot0], dtype=float) if co_integrate else None,
        aux_rhs=aux_rhs if co_integrate else None,
        aux_at=aux_at,
        invariant=invariant,
        diagnostics=diagnostics,
        metadata={"eos": eos.name, "R0": R0, "Rdot0": Rdot0},
    )
