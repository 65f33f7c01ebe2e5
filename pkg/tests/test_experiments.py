import csv
import dataclasses
import json
import math

import numpy as np
import pytest

from hyperflow.experiments import (
    CSV_COLUMNS,
    ExperimentConfig,
    RunRecord,
    build_problem,
    config_from_json,
    config_hash,
    default_config,
    emit,
    fit_modulus,
    load_config,
    run_energy_check,
    run_flowmap,
    run_holder_probe,
    worker_count,
)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(model="navier_stokes")
    with pytest.raises(ValueError):
        ExperimentConfig(dt=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(dealias_rule=1.5)
    cfg = default_config("burgers")
    amps = cfg.amplitudes
    assert amps[0] == 1e-2 and len(amps) == 7
    assert all(a > b for a, b in zip(amps, amps[1:]))


def test_load_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        '[experiment]\nmodel = "advection"\nT = 0.5\n[grid]\npoints = 32\n'
        '[data]\nseed = 3\n[output]\ndir = "out"\ndeterministic = true\n'
    )
    cfg = load_config(path)
    assert (cfg.model, cfg.T, cfg.points, cfg.seed, cfg.output_dir, cfg.deterministic) == (
        "advection", 0.5, 32, 3, "out", True)
    assert cfg.base_amplitude == default_config("advection").base_amplitude
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nspacing = 2\n")
    with pytest.raises(ValueError, match="spacing"):
        load_config(bad)
    bad.write_text("[plot]\nx = 1\n")
    with pytest.raises(ValueError, match="plot"):
        load_config(bad)
    with pytest.raises(OSError, match="missing"):
        load_config(tmp_path / "missing.toml")


def test_worker_count(monkeypatch):
    monkeypatch.setenv("HYPERFLOW_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(default_config("burgers", deterministic=True)) == 1
    monkeypatch.setenv("HYPERFLOW_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()


def test_fit_modulus():
    d0 = [1e-2 * 2.0**-n for n in range(5)]
    assert fit_modulus(d0, [3 * x**0.5 for x in d0]) == pytest.approx(0.5)
    assert fit_modulus([0.0, 1.0], [0.0, 1.0]) is None


def test_zero_amplitude_gives_zero_differences():
    cfg = default_config("burgers", eps0=0.0, n_max=2, T=0.2, deterministic=True)
    rec = run_flowmap(cfg)
    assert [r["sup_diff"] for r in rec.rows] == [0.0, 0.0, 0.0]
    assert rec.theta is None


def test_burgers_flowmap_self_consistent():
    rec = run_flowmap(default_config("burgers", deterministic=True))
    d = rec.sup_diffs
    assert all(a > b for a, b in zip(d, d[1:]))
    eps = rec.config.amplitudes
    assert d[-1] < 10 * eps[-1] ** rec.theta
    assert all(r["status"] == "ok" for r in rec.rows)


def test_holder_probe_advection():
    rep = run_holder_probe(default_config("advection", n_max=3, deterministic=True))
    for row in rep["table"]:
        assert abs(row["theta"] - 1.0) < 0.05
        assert len(row["pairs"]) == 4


def test_holder_probe_burgers_l2():
    rep = run_holder_probe(default_config("burgers", n_max=3, deterministic=True), s_values=(0.0,))
    assert abs(rep["table"][0]["theta"] - 1.0) < 0.1


def test_cosmo_fixed_point_base():
    cfg = default_config("cosmo", points=8, n_max=1, T=0.1, dt=0.05, deterministic=True)
    problem = build_problem(cfg)
    assert problem.base.sup() == 0.0
    rec = run_flowmap(cfg)
    assert all(r["sup_diff"] > 0 for r in rec.rows)


def test_aborted_perturbation_is_recorded():
    # the largest perturbation breaks the CFL bound at t = 0; the smaller ones run
    cfg = default_config("burgers", eps0=5.0, n_max=3, T=0.5, dt=0.01, deterministic=True)
    rec = run_flowmap(cfg)
    statuses = [r["status"] for r in rec.rows]
    assert statuses[0] == "error" and statuses[-1] == "ok"
    assert len(statuses) == 4
    assert math.isnan(rec.rows[0]["sup_diff"])
    assert rec.theta is not None


def test_emit_csv_json_roundtrip(tmp_path):
    cfg = default_config("burgers", n_max=2, T=0.2, deterministic=True)
    rec = run_flowmap(cfg)
    csv_path = emit(rec, "csv", tmp_path / "a.csv")
    raw = csv_path.read_bytes()
    assert raw.startswith(b"n,eps,d0_norm,sup_diff,status\r\n")
    rows = list(csv.DictReader(csv_path.open(newline="")))
    assert [float(r["sup_diff"]) for r in rows] == rec.sup_diffs
    json_path = emit(rec, "json", tmp_path / "a.json")
    payload = json.loads(json_path.read_text())
    assert payload["config_hash"] == config_hash(cfg)
    assert config_hash(config_from_json(json_path)) == config_hash(cfg)
    assert payload["seed"] == cfg.seed


def test_emit_empty_and_errors(tmp_path):
    path = emit(RunRecord(config=default_config("burgers")), "csv", tmp_path / "empty.csv")
    assert path.read_bytes() == (",".join(CSV_COLUMNS) + "\r\n").encode()
    with pytest.raises(ValueError):
        emit(RunRecord(config=default_config("burgers")), "xml", tmp_path / "x")
    with pytest.raises(TypeError):
        emit({"a": 1}, "csv", tmp_path / "x.csv")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="cannot write"):
        emit({"a": 1}, "json", blocker / "sub" / "x.json")


def test_determinism_byte_identical(tmp_path):
    cfg = default_config("epm_torus", points=8, T=0.1, dt=0.05, n_max=2, deterministic=True)
    a = emit(run_flowmap(cfg), "csv", tmp_path / "a.csv").read_bytes()
    b = emit(run_flowmap(cfg), "csv", tmp_path / "b.csv").read_bytes()
    assert a == b


def test_threaded_matches_sequential(monkeypatch):
    monkeypatch.setenv("HYPERFLOW_THREADS", "4")
    cfg = default_config("burgers", n_max=3, T=0.3)
    threaded = run_flowmap(cfg).sup_diffs
    sequential = run_flowmap(dataclasses.replace(cfg, deterministic=True)).sup_diffs
    assert threaded == sequential


def test_energy_check_advection():
    rep = run_energy_check(default_config("advection", points=32))
    assert rep["coarse"]["c_min_low"] == 0.0 and rep["fine"]["c_min_standard"] == 0.0
    assert rep["stable_low"] and rep["stable_standard"]
    with pytest.raises(ValueError):
        run_energy_check(default_config("epm_torus"))


@pytest.mark.slow
@pytest.mark.parametrize("model", ["advection", "epm_compact"])
def test_remaining_default_configs_converge(model):
    rec = run_flowmap(default_config(model))
    d = rec.sup_diffs
    assert all(r["status"] == "ok" for r in rec.rows)
    assert all(b <= a for a, b in zip(d, d[1:]))
    assert d[-1] / d[0] < 0.05
