"""Command-line entry point: ``hyperflow <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import experiments as ex
from .cosmology import EDS_RDOT, CollapseError, integrate_background
from .estimates import run_estimate_suite
from .norms import NormSpec, hs_norm, weighted_norm, weighted_norm_direct
from .solver import SolverError, solve
from .spectral import SupportError


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if args.config else ex.default_config(args.model or "burgers")
    if args.config and args.model and args.model != cfg.model:
        cfg = ex.default_config(args.model, **{k: v for k, v in cfg.to_dict().items() if k != "model"})
    overrides = {}
    if args.deterministic:
        overrides["deterministic"] = True
    if args.out:
        overrides["output_dir"] = args.out
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _out(cfg: ex.ExperimentConfig, name: str) -> Path:
    return Path(cfg.output_dir) / f"{cfg.model}_{name}"


def _report(paths) -> None:
    for p in paths:
        print(p)


def cmd_solve(args) -> int:
    cfg = _config(args)
    problem = ex.build_problem(cfg)
    traj = solve(problem.system, problem.base, cfg.T, cfg.dt, s_diag=cfg.s,
                 record_every=cfg.record_every, dealias_rule=cfg.dealias_rule)
    keys = sorted({k for d in traj.diagnostics for k in d if not isinstance(d[k], (list, tuple))})
    csv_path = _out(cfg, "solve.csv")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(keys)
        for d in traj.diagnostics:
            writer.writerow([repr(d.get(k, "")) if isinstance(d.get(k), float) else d.get(k, "") for k in keys])
    summary = {"config": cfg.to_dict(), "config_hash": ex.config_hash(cfg), "status": traj.status,
               "message": traj.message, "dt": traj.dt, "diagnostics": traj.diagnostics}
    _report([csv_path, ex.emit(summary, "json", _out(cfg, "solve.json"))])
    return 0 if traj.completed else 2


def cmd_norm(args) -> int:
    cfg = _config(args)
    field = ex.build_problem(cfg).base
    s = cfg.s if args.s is None else args.s
    out = {"model": cfg.model, "s": s, "hs_norm": hs_norm(field, s)}
    if not field.grid.periodic:
        delta = cfg.delta if args.delta is None else args.delta
        j_max = cfg.j_max if args.j_max is None else args.j_max
        out.update(delta=delta, j_max=j_max)
        out["weighted_norm"] = weighted_norm(field, NormSpec(s, delta, j_max))
        if float(s).is_integer():
            out["weighted_norm_direct"] = weighted_norm_direct(field, int(s), delta)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_flowmap(args) -> int:
    cfg = _config(args)
    record = ex.run_flowmap(cfg)
    _report([ex.emit(record, "csv", _out(cfg, "flowmap.csv")), ex.emit(record, "json", _out(cfg, "flowmap.json"))])
    return 0 if all(r["status"] == "ok" for r in record.rows) else 2


def cmd_holder(args) -> int:
    cfg = _config(args)
    if cfg.model not in ("burgers", "advection"):
        raise ValueError("the Hoelder probe is defined for the burgers and advection models")
    report = ex.run_holder_probe(cfg, tuple(args.s_values))
    for row in report["table"]:
        print(f"s = {row['s']:g}: theta = {row['theta']}")
    _report([ex.emit(report, "json", _out(cfg, "holder.json"))])
    return 0


def cmd_energy(args) -> int:
    cfg = _config(args)
    report = ex.run_energy_check(cfg)
    print(f"C_min (s-1): {report['coarse']['c_min_low']:.6g} -> {report['fine']['c_min_low']:.6g}"
          f"  stable={report['stable_low']}")
    print(f"C_min (s):   {report['coarse']['c_min_standard']:.6g} -> {report['fine']['c_min_standard']:.6g}"
          f"  stable={report['stable_standard']}")
    _report([ex.emit(report, "json", _out(cfg, "energy.json"))])
    return 0


def cmd_estimates(args) -> int:
    report = run_estimate_suite(n=args.points, samples=args.samples, seed=args.seed)
    path = Path(args.out or "results") / "estimates.json"
    _report([ex.emit(report, "json", path)])
    return 0 if all(v["stable"] for v in report["estimates"].values()) else 2


def cmd_background(args) -> int:
    states = integrate_background(args.R0, args.Rdot0, args.T, args.dt)
    path = Path(args.out or "results") / "cosmo_background.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(("t", "R", "Rdot", "rho_hat", "E"))
        for st in states:
            writer.writerow([repr(float(v)) for v in (st.t, st.R, st.Rdot, st.rho_hat, st.energy)])
    _report([path])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperflow", description="Flow-map continuity experiments for symmetric hyperbolic systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--model", choices=ex.MODELS, help="model id (overrides the config)")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--deterministic", action="store_true", help="run solves sequentially")
        p.set_defaults(func=func)
        return p

    experiment("solve", cmd_solve, "solve the base problem and write diagnostics")
    norm = experiment("norm", cmd_norm, "norms of the configured initial data")
    norm.add_argument("--s", type=float)
    norm.add_argument("--delta", type=float)
    norm.add_argument("--j-max", dest="j_max", type=int)
    experiment("flowmap", cmd_flowmap, "flow-map continuity experiment")
    holder = experiment("holder", cmd_holder, "modulus exponent across Sobolev orders")
    holder.add_argument("--s-values", type=float, nargs="+", default=[0.0, 1.0, 2.0, 3.0])
    experiment("energy-check", cmd_energy, "energy inequality margins of a frozen linear system")

    est = sub.add_parser("estimates", help="run the product and commutator estimate suite")
    est.add_argument("--points", type=int, default=64)
    est.add_argument("--samples", type=int, default=100)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--out")
    est.set_defaults(func=cmd_estimates)

    bg = sub.add_parser("cosmo-background", help="integrate the homogeneous background")
    bg.add_argument("--R0", type=float, default=1.0)
    bg.add_argument("--Rdot0", type=float, default=EDS_RDOT)
    bg.add_argument("--T", type=float, default=1.0)
    bg.add_argument("--dt", type=float, default=1e-3)
    bg.add_argument("--out")
    bg.set_defaults(func=cmd_background)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, SupportError, SolverError, CollapseError, RuntimeError) as exc:
        print(f"hyperflow {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
