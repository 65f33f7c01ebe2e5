"""Euler-Poisson in Makino variables.

With p = K rho^gamma and w = (2 sqrt(K gamma)/(gamma - 1)) rho^((gamma-1)/2) the
system for U = (w, v) is symmetric hyperbolic even where rho = 0:

    d_t w + v.grad w + ((gamma-1)/2) w div v = 0
    d_t v + (v.grad) v + ((gamma-1)/2) w grad w = -grad phi,   Delta phi = c w^beta

with beta = 2/(gamma-1) and c = c_{K,gamma}, chosen so that c w^beta = 4 pi rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .elliptic import free_space_gradient, grad_inv_laplacian
from .solver import SystemModel
from .spectral import RealField

__all__ = [
    "EpmParams",
    "makino_from_density",
    "density_from_makino",
    "makino_source",
    "epm_system",
    "power_difference",
    "power_difference_bound",
    "VACUUM_TOL",
]

VACUUM_TOL = 1e-8


@dataclass(frozen=True)
class EpmParams:
    K: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not 1 < self.gamma <= 3:
            raise ValueError(f"unsupported gamma = {self.gamma}: need 1 < gamma <= 3")

    @property
    def beta(self) -> float:
        return 2.0 / (self.gamma - 1.0)

    @property
    def makino_factor(self) -> float:
        """w = makino_factor * rho^((gamma-1)/2)."""
        return 2.0 * math.sqrt(self.K * self.gamma) / (self.gamma - 1.0)

    @property
    def c_K_gamma(self) -> float:
        return 4.0 * math.pi * ((self.gamma - 1.0) / (2.0 * math.sqrt(self.K * self.gamma))) ** self.beta


def makino_from_density(rho: RealField, params: EpmParams) -> RealField:
    if np.any(rho.values < 0):
        raise ValueError("density must be non-negative")
    return rho.with_values(params.makino_factor * rho.values ** ((params.gamma - 1.0) / 2.0))


def density_from_makino(w: RealField, params: EpmParams) -> RealField:
    if np.any(w.values < 0):
        raise ValueError("Makino variable must be non-negative")
    return w.with_values((w.values / params.makino_factor) ** params.beta)


def makino_source(w: np.ndarray, params: EpmParams) -> np.ndarray:
    """c_{K,gamma} w^beta with w clamped below at 0 (equals 4 pi rho)."""
    return params.c_K_gamma * np.maximum(w, 0.0) ** params.beta


def epm_system(params: EpmParams, domain: str = "torus", dim: int = 3) -> SystemModel:
    """SystemModel for U = (w, v^1..v^d).

    ``domain='torus'`` removes the mean of the Poisson source (recorded as the
    diagnostic ``source_mean``); ``domain='free_space'`` solves the isolated
    problem on the padded box (d = 3 only).
    """
    if domain not in ("torus", "free_space"):
        raise ValueError(f"unknown domain {domain!r}")
    if domain == "free_space" and dim != 3:
        raise ValueError("the free-space variant is three-dimensional")
    n = dim + 1
    kappa = (params.gamma - 1.0) / 2.0

    def flux(u, t, aux, grid):
        w = u[0]
        out = []
        for a in range(dim):
            va = u[1 + a]
            m = np.zeros((n, n) + grid.shape)
            for i in range(n):
                m[i, i] = va
            m[0, 1 + a] = kappa * w
            m[1 + a, 0] = kappa * w
            out.append(m)
        return out

    def potential_gradient(u, grid):
        src = RealField(grid, makino_source(u[0], params))
        if domain == "torus":
            return grad_inv_laplacian(src, project_mean=True)
        rho = src * (1.0 / (4.0 * math.pi))
        return free_space_gradient(rho)

    def g(u, t, aux, grid):
        out = np.zeros_like(u)
        for a, grad in enumerate(potential_gradient(u, grid)):
            out[1 + a] = -grad.values[0]
        return out

    def invariant(u, t, aux, grid):
        low = float(np.min(u[0]))
        if low < -VACUUM_TOL:
            return f"Makino variable dropped to {low:.3e}"
        return None

    def diagnostics(u, t, aux, grid):
        rho = (np.maximum(u[0], 0.0) / params.makino_factor) ** params.beta
        rec = {"mass": float(np.sum(rho) * grid.cell_volume), "w_min": float(np.min(u[0]))}
        if domain == "torus":
            rec["source_mean"] = float(np.mean(makino_source(u[0], params)))
        return rec

    return SystemModel(
        name=f"epm_{domain}",
        components=n,
        dim=dim,
        flux=flux,
        g=g,
        invariant=invariant,
        diagnostics=diagnostics,
        flux_vanishes_at_zero=True,
        metadata={"K": params.K, "gamma": params.gamma, "domain": domain},
    )


def power_difference(w: float, w_hat: float, beta: float) -> float:
    """w^beta - w_hat^beta from the mean-value form beta (w - w_hat) int_0^1 (tau w + (1-tau) w_hat)^(beta-1) dtau."""
    if w < 0 or w_hat < 0:
        raise ValueError("arguments must be non-negative")
    if w == w_hat:
        return 0.0
    val, _ = integrate.quad(lambda tau: (tau * w + (1 - tau) * w_hat) ** (beta - 1), 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    return beta * (w - w_hat) * val


def power_difference_bound(w: float, w_hat: float, beta: float) -> float:
    """beta |w - w_hat| int_0^1 (tau w^(beta-1) + (1-tau) w_hat^(beta-1)) dtau.

    Dominates |w^beta - w_hat^beta| for beta >= 2 (convexity of x^(beta-1))
    and coincides with it at beta = 1, 2.
    """
    return beta * abs(w - w_hat) * 0.5 * (w ** (beta - 1) + w_hat ** (beta - 1))
