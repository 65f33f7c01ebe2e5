"""Configuration-driven experiments: flow-map continuity, Hoelder probes, energy checks.

Config files are TOML with flat sections:

    [experiment]  model, T, dt, record_every, dealias_rule
    [grid]        points, box_length
    [norm]        s, delta, j_max
    [data]        seed, eps0, n_max, base_amplitude
    [epm]         K, gamma
    [cosmo]       kappa, R0, Rdot0
    [output]      dir, deterministic

Every key is optional; missing keys take the model's defaults.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cosmology import EDS_RDOT, EosModel, cosmo_system
from .estimates import energy_inequality_margin, frozen_linear_system
from .makino import EpmParams, epm_system, makino_from_density
from .norms import hs_norm
from .solver import SolverError, SystemModel, Trajectory, advection_system, burgers_system, solve
from .spectral import Grid, RealField, random_band_limited

__all__ = [
    "MODELS",
    "ExperimentConfig",
    "RunRecord",
    "default_config",
    "load_config",
    "config_hash",
    "build_problem",
    "run_flowmap",
    "run_holder_probe",
    "run_energy_check",
    "emit",
    "worker_count",
    "CSV_COLUMNS",
]

MODELS = ("burgers", "advection", "epm_torus", "epm_compact", "cosmo")
CSV_COLUMNS = ("n", "eps", "d0_norm", "sup_diff", "status")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "burgers"
    points: int = 64
    box_length: float = 2 * math.pi
    s: float = 3.0
    delta: float = 0.0
    j_max: int = 4
    seed: int = 0
    eps0: float = 1e-2
    n_max: int = 6
    base_amplitude: float = 0.1
    T: float = 1.0
    dt: float = 0.01
    record_every: int = 1
    K: float = 1.0
    gamma: float = 2.0
    kappa: float = 1.0
    R0: float = 1.0
    Rdot0: float = EDS_RDOT
    dealias_rule: float = 2.0 / 3.0
    output_dir: str = "results"
    deterministic: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.eps0 < 0 or self.n_max < 0:
            raise ValueError("eps0 and n_max must be non-negative")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")
        if not 0 < self.dealias_rule <= 1:
            raise ValueError("dealias_rule must lie in (0, 1]")

    @property
    def dim(self) -> int:
        return 1 if self.model in ("burgers", "advection") else 3

    @property
    def amplitudes(self) -> list[float]:
        return [self.eps0 * 2.0**-n for n in range(self.n_max + 1)]

    def grid(self) -> Grid:
        return Grid(self.dim, self.points, self.box_length, periodic=self.model != "epm_compact")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_DEFAULTS: dict[str, dict[str, Any]] = {
    "burgers": dict(points=64, s=3.0, T=1.0, dt=0.01, base_amplitude=0.1),
    "advection": dict(points=64, s=3.0, T=1.0, dt=0.01, base_amplitude=1.0),
    "epm_torus": dict(points=32, s=3.0, T=0.5, dt=0.025, gamma=2.0, base_amplitude=0.1, record_every=2),
    "epm_compact": dict(points=32, box_length=16.0, s=3.0, T=0.25, dt=0.025,
                        gamma=2.0, base_amplitude=1.0, record_every=5, dealias_rule=1.0),
    "cosmo": dict(points=32, s=3.0, T=0.5, dt=0.025, base_amplitude=0.0, record_every=2),
}

_SECTIONS = {
    "experiment": ("model", "T", "dt", "record_every", "dealias_rule"),
    "grid": ("points", "box_length"),
    "norm": ("s", "delta", "j_max"),
    "data": ("seed", "eps0", "n_max", "base_amplitude"),
    "epm": ("K", "gamma"),
    "cosmo": ("kappa", "R0", "Rdot0"),
    "output": ("dir", "deterministic"),
}


def default_config(model: str, **overrides) -> ExperimentConfig:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    values = dict(_DEFAULTS[model])
    values.update(overrides)
    return ExperimentConfig(model=model, **values)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    flat: dict[str, Any] = {}
    for section, body in raw.items():
        if section not in _SECTIONS:
            raise ValueError(f"{path}: unknown section [{section}]")
        for key, value in body.items():
            if key not in _SECTIONS[section]:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            flat["output_dir" if (section, key) == ("output", "dir") else key] = value
    model = flat.pop("model", "burgers")
    return default_config(model, **flat)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def worker_count(config: ExperimentConfig | None = None) -> int:
    if config is not None and config.deterministic:
        return 1
    env = os.environ.get("HYPERFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValueError(f"HYPERFLOW_THREADS must be an integer, got {env!r}") from exc
    return max(1, min(8, os.cpu_count() or 1))


# --- problems -------------------------------------------------------------------


@dataclass
class Problem:
    system: SystemModel
    base: RealField
    direction: RealField
    norm: Callable[[RealField], float]


def build_problem(config: ExperimentConfig) -> Problem:
    """System, base data u0, perturbation direction v and the experiment norm.

    Data families: Burgers u0 = a sin x, v = cos x; advection (unit speed)
    u0 = a sin x, v = cos 2x; EPM torus rho0 = 1 + a(cos x cos y + sin z / 2)
    with v0 = (a/2) sin y e1, direction = seeded band-limited noise (sup 1);
    EPM compact: w0 = a exp(-|x|^2/2) on the padded box, v0 = 0, direction
    exp(-|x|^2) in w, measured in H^s; cosmo: zero base, seeded band-limited direction
    with zero-mean sigma.
    """
    grid = config.grid()
    s = config.s
    a = config.base_amplitude

    def hs(f):
        return hs_norm(f, s)

    if config.model == "burgers":
        x = grid.axes[0]
        return Problem(burgers_system(), RealField(grid, a * np.sin(x)), RealField(grid, np.cos(x)), hs)
    if config.model == "advection":
        x = grid.axes[0]
        return Problem(advection_system([1.0]), RealField(grid, a * np.sin(x)), RealField(grid, np.cos(2 * x)), hs)
    if config.model == "epm_torus":
        params = EpmParams(config.K, config.gamma)
        X, Y, Z = grid.mesh
        rho = 1.0 + a * (np.cos(X) * np.cos(Y) + 0.5 * np.sin(Z))
        u0 = np.zeros((4,) + grid.shape)
        u0[0] = makino_from_density(RealField(grid, rho), params).values[0]
        u0[1] = 0.5 * a * np.sin(Y)
        k_cut = max(1, min(3, grid.points // 2 - 1))
        v = random_band_limited(grid, 4, seed=config.seed, k_cut=k_cut)
        return Problem(epm_system(params, "torus"), RealField(grid, u0), v, hs)
    if config.model == "epm_compact":
        params = EpmParams(config.K, config.gamma)
        u0 = np.zeros((4,) + grid.shape)
        r2 = sum(c**2 for c in grid.mesh)
        u0[0] = a * np.exp(-0.5 * r2)
        v = np.zeros_like(u0)
        v[0] = np.exp(-r2)
        return Problem(epm_system(params, "free_space"), RealField(grid, u0), RealField(grid, v), hs)
    # cosmo
    kappa = config.kappa
    eos = EosModel(lambda r: kappa * r**2, lambda r: 2 * kappa * r, f"{kappa:g} rho^2")
    system = cosmo_system(eos, R0=config.R0, Rdot0=config.Rdot0)
    k_cut = max(1, min(3, grid.points // 2 - 1))
    v = random_band_limited(grid, 4, seed=config.seed, k_cut=k_cut)
    vals = v.values.copy()
    vals[0] -= vals[0].mean()
    base = grid.zeros(4) if a == 0 else random_band_limited(grid, 4, seed=config.seed + 1, k_cut=k_cut, amplitude=a)
    if a:
        bv = base.values.copy()
        bv[0] -= bv[0].mean()
        base = RealField(grid, bv)
    return Problem(system, base, RealField(grid, vals), hs)


# --- flow map ----------------------------------------------------------------------


@dataclass
class RunRecord:
    config: ExperimentConfig
    rows: list[dict] = dc_field(default_factory=list)
    series: dict[int, list[float]] = dc_field(default_factory=dict)
    times: list[float] = dc_field(default_factory=list)
    theta: float | None = None
    base_status: str = "ok"
    runtime_seconds: float = 0.0

    @property
    def sup_diffs(self) -> list[float]:
        return [r["sup_diff"] for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": config_hash(self.config),
            "seed": self.config.seed,
            "base_status": self.base_status,
            "theta": self.theta,
            "rows": self.rows,
            "times": self.times,
            "series": {str(k): v for k, v in self.series.items()},
            "runtime_seconds": self.runtime_seconds,
        }


def fit_modulus(d0: list[float], diffs: list[float]) -> float | None:
    """Least-squares slope of log D against log ||u0^n - u0|| (positive pairs only)."""
    pairs = [(x, y) for x, y in zip(d0, diffs) if x > 0 and y > 0]
    if len(pairs) < 2:
        return None
    lx = np.log([p[0] for p in pairs])
    ly = np.log([p[1] for p in pairs])
    return float(np.polyfit(lx, ly, 1)[0])


def _solve_all(problem: Problem, config: ExperimentConfig) -> tuple[Trajectory, list[Trajectory]]:
    def one(u0):
        return solve(problem.system, u0, config.T, config.dt, s_diag=config.s,
                     record_every=config.record_every, dealias_rule=config.dealias_rule)

    def perturbed(u0):
        # a failing perturbed solve is flagged in its row rather than ending the run
        try:
            return one(u0)
        except SolverError as exc:
            return Trajectory(grid=u0.grid, status="error", message=f"{type(exc).__name__}: {exc}")

    data = [problem.base + problem.direction * eps for eps in config.amplitudes]
    workers = min(worker_count(config), len(data) + 1)
    if workers == 1:
        return one(problem.base), [perturbed(u) for u in data]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        base = pool.submit(one, problem.base)
        futures = [pool.submit(perturbed, u) for u in data]
        return base.result(), [f.result() for f in futures]


def _difference_series(base: Trajectory, other: Trajectory, norm) -> list[float]:
    return [norm(b - o) for b, o in zip(base.states, other.states)]


def _assemble(config, problem, base, perturbed, norm, start) -> RunRecord:
    record = RunRecord(config=config, base_status=base.status, times=list(base.times))
    if not base.completed:
        raise RuntimeError(f"base solve aborted: {base.message}")
    dnorm = norm(problem.direction)
    for n, (eps, traj) in enumerate(zip(config.amplitudes, perturbed)):
        series = _difference_series(base, traj, norm) if traj.completed else []
        record.series[n] = series
        record.rows.append({
            "n": n,
            "eps": eps,
            "d0_norm": eps * dnorm,
            "sup_diff": max(series) if series else float("nan"),
            "status": traj.status,
        })
    ok = [r for r in record.rows if r["status"] == "ok"]
    record.theta = fit_modulus([r["d0_norm"] for r in ok], [r["sup_diff"] for r in ok])
    record.runtime_seconds = time.perf_counter() - start
    return record


def run_flowmap(config: ExperimentConfig) -> RunRecord:
    """D_n = sup_t ||U^n(t) - U(t)|| for u0^n = u0 + eps_n v, n = 0..n_max."""
    start = time.perf_counter()
    problem = build_problem(config)
    base, perturbed = _solve_all(problem, config)
    return _assemble(config, problem, base, perturbed, problem.norm, start)


def run_holder_probe(config: ExperimentConfig, s_values=(0.0, 1.0, 2.0, 3.0)) -> dict:
    """Fitted modulus exponent theta(s) from one set of solves, plus the raw (eps, D) pairs."""
    if config.model not in ("burgers", "advection"):
        raise ValueError("the Hoelder probe runs on the Burgers model (advection as control)")
    start = time.perf_counter()
    problem = build_problem(config)
    base, perturbed = _solve_all(problem, config)
    table = []
    for s in s_values:
        rec = _assemble(config, problem, base, perturbed, lambda f, s=s: hs_norm(f, s), start)
        table.append({
            "s": s,
            "theta": rec.theta,
            "pairs": [{"eps": r["eps"], "d0_norm": r["d0_norm"], "sup_diff": r["sup_diff"], "status": r["status"]}
                      for r in rec.rows],
        })
    return {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "table": table,
        "runtime_seconds": time.perf_counter() - start,
    }


# --- energy check --------------------------------------------------------------------


def _energy_setup(model: str, points: int):
    """Reference data, frozen linear system and initial data for the energy check."""
    if model in ("burgers", "advection"):
        grid = Grid(1, points, 2 * math.pi)
        x = grid.axes[0]
        u0 = random_band_limited(grid, seed=5, k_cut=4)
        if model == "advection":
            system = advection_system([1.0])
            return system, u0, 1.0, 0.01
        ref = solve(burgers_system(), RealField(grid, np.sin(x)), 0.6, 0.005, record_every=2)
        return frozen_linear_system(burgers_system(), ref), u0, 0.6, 0.005
    if model == "cosmo":
        grid = Grid(3, points, 2 * math.pi)
        X, Y, _ = grid.mesh
        eos = EosModel(lambda r: 0.05 * r**2, lambda r: 0.1 * r, "0.05 rho^2")
        system = cosmo_system(eos, R0=1.0, Rdot0=0.0)
        u = np.zeros((4,) + grid.shape)
        u[1] = -0.2 * np.sin(X)
        u[2] = -0.1 * np.sin(Y)
        ref = solve(system, RealField(grid, u), 0.3, 0.01)
        u0 = random_band_limited(grid, 4, seed=2, k_cut=3, amplitude=0.1)
        return frozen_linear_system(system, ref), u0, 0.3, 0.01
    raise ValueError(f"no energy check for model {model!r}")


def energy_margins(model: str, points: int, s: float = 3.0) -> dict:
    system, u0, T, dt = _energy_setup(model, points)
    traj = solve(system, u0, T, dt, record_every=2)
    low = energy_inequality_margin(traj, system, s)
    std = energy_inequality_margin(traj, system, s, standard=True)
    # uncharged_integral: int ||d_t A0||_inf dt on the A0 != Id path, else T
    return {"points": points, "c_min_low": low.c_min, "c_min_standard": std.c_min, "status": traj.status,
            "a0_path": system.a0 is not None, "uncharged_integral": float(low.uncharged_integral[-1])}


def _factor_two(a: float, b: float) -> bool:
    if a == 0 and b == 0:
        return True
    if a <= 0 or b <= 0:
        return False
    return 0.5 <= b / a <= 2.0


def run_energy_check(config: ExperimentConfig) -> dict:
    """C_min at regularities s - 1 and s on a grid and its doubling."""
    start = time.perf_counter()
    coarse = energy_margins(config.model, config.points, config.s)
    fine = energy_margins(config.model, 2 * config.points, config.s)
    return {
        "model": config.model,
        "s": config.s,
        "coarse": coarse,
        "fine": fine,
        "stable_low": _factor_two(coarse["c_min_low"], fine["c_min_low"]),
        "stable_standard": _factor_two(coarse["c_min_standard"], fine["c_min_standard"]),
        "config_hash": config_hash(config),
        "runtime_seconds": time.perf_counter() - start,
    }


# --- persistence ------------------------------------------------------------------------


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit(record: RunRecord | dict, fmt: str, path: str | os.PathLike) -> Path:
    """Write a flow-map record as CSV (fixed columns) or any record as JSON."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            if not isinstance(record, RunRecord):
                raise TypeError("CSV output is defined for flow-map records")
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
                writer.writerow(CSV_COLUMNS)
                for row in record.rows:
                    writer.writerow([_format(row[c]) for c in CSV_COLUMNS])
        elif fmt == "json":
            payload = record.to_dict() if isinstance(record, RunRecord) else record
            with path.open("w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
                fh.write("\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def config_from_json(path: str | os.PathLike) -> ExperimentConfig:
    """Rebuild the config echoed in a JSON record."""
    with Path(path).open() as fh:
        payload = json.load(fh)
    return ExperimentConfig(**payload["config"])
