"""Grid scheduling, manifests, CSV emission, resume, worker handling."""

import json
import os
import warnings

import numpy as np
import pytest

from kztn import runner
from kztn.config import parse_config
from kztn.errors import ParameterError


def equilibrium_config(out_dir, j_grid="0, 0.1"):
    return parse_config(
        "mode = equilibrium-scan\n"
        f"output_dir = {out_dir}\n"
        "model.L = 8\n"
        "model.d = 2\n"
        "policy.max_bond = 8\n"
        "policy.svd_cutoff = 1e-12\n"
        f"grids.J = {j_grid}\n"
        "grids.T = 0\n")


def quench_config(out_dir):
    return parse_config(
        "mode = quench-sweep\n"
        f"output_dir = {out_dir}\n"
        "model.L = 4\n"
        "model.d = 3\n"
        "policy.max_bond = 12\n"
        "policy.dt = 0.01\n"
        "grids.tau_q = 0.5, 1.0\n"
        "grids.T = 0\n")


def test_config_hash_stable_and_sensitive(tmp_path):
    a = equilibrium_config(tmp_path)
    b = equilibrium_config(tmp_path)
    c = equilibrium_config(tmp_path, j_grid="0, 0.2")
    assert runner.config_hash(a) == runner.config_hash(b)
    assert runner.config_hash(a) != runner.config_hash(c)
    assert len(runner.config_hash(a)) == 16
    assert all(ch in "0123456789abcdef" for ch in runner.config_hash(a))


def test_jsonable_strips_numpy_types():
    blob = {"a": np.float64(1.5), "b": np.int32(3),
            "c": np.array([1.0, 2.0]), "d": (1 + 0j),
            "e": [np.float64(0.25)], "f": {"g": np.int64(7)}}
    out = runner._jsonable(blob)
    assert out == {"a": 1.5, "b": 3, "c": [1.0, 2.0], "d": 1.0,
                   "e": [0.25], "f": {"g": 7}}
    json.dumps(out)


def test_execute_point_captures_warnings(monkeypatch):
    def noisy(payload):
        warnings.warn("bond cap hit")
        return {"rows": [{"J": 0.0}], "extra": {"xi_L": 1.0}}

    monkeypatch.setitem(runner._POINT_KINDS, "equilibrium", noisy)
    out = runner.execute_point({"index": 3, "label": "J=0,T=0",
                                "kind": "equilibrium"})
    assert out["status"] == "success"
    assert out["index"] == 3
    assert out["flags"]["warnings"] == ["bond cap hit"]
    assert out["wall_time_seconds"] >= 0


def test_execute_point_turns_exceptions_into_failures(monkeypatch):
    def boom(payload):
        raise RuntimeError("bad contraction")

    monkeypatch.setitem(runner._POINT_KINDS, "equilibrium", boom)
    out = runner.execute_point({"index": 0, "label": "x",
                                "kind": "equilibrium"})
    assert out["status"] == "failed"
    assert out["error"] == "RuntimeError: bad contraction"
    assert out["rows"] == []


def test_equilibrium_run_writes_manifest_and_csv(tmp_path):
    cfg = equilibrium_config(tmp_path)
    manifest = runner.run_experiment(cfg)
    assert manifest["config_hash"] == runner.config_hash(cfg)
    assert [p["status"] for p in manifest["points"]] == ["success"] * 2
    assert parse_config(manifest["config"]) == cfg

    path = os.path.join(str(tmp_path), "manifest.json")
    with open(path) as fh:
        on_disk = json.load(fh)
    assert on_disk["config_hash"] == manifest["config_hash"]
    assert [p["index"] for p in on_disk["points"]] == [0, 1]

    csv_path = manifest["files"]["equilibrium.csv"]
    with open(csv_path) as fh:
        lines = fh.read().splitlines()
    assert lines[0].split(",")[:2] == ["J", "T"]
    # per point: L=8 site rows plus r=0..3 correlation rows
    assert len(lines) == 1 + 2 * 12


def test_mu_scan_emits_compressibility_csv(tmp_path):
    cfg = parse_config(
        "mode = equilibrium-scan\n"
        f"output_dir = {tmp_path}\n"
        "model.L = 8\n"
        "model.d = 2\n"
        "policy.max_bond = 8\n"
        "grids.J = 0\n"
        "grids.T = 0\n"
        "grids.mu = 0.45, 0.5, 0.55\n")
    manifest = runner.run_experiment(cfg)
    assert all(p["status"] == "success" for p in manifest["points"])
    path = manifest["files"]["compressibility.csv"]
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "J,mu,rho,drho_dmu"
    assert len(lines) == 1 + 3 + 1
    # d=2 pins every site at one boson across this window: zero slope
    slope = float(lines[4].split(",")[3])
    assert abs(slope) < 1e-12


def test_quench_sweep_csv_and_fit_report(tmp_path):
    cfg = quench_config(tmp_path)
    manifest = runner.run_experiment(cfg)
    assert all(p["status"] == "success" for p in manifest["points"])
    with open(manifest["files"]["sweep.csv"]) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == ",".join(runner.SWEEP_HEADER)
    assert len(lines) == 3
    xi = [float(line.split(",")[6]) for line in lines[1:]]
    assert all(x > 0 for x in xi)
    # both tau_q sit below the default fit window, so the report must say so
    with open(manifest["files"]["fits.txt"]) as fh:
        report = fh.read()
    assert "unavailable" in report


def test_state_diagram_mode(tmp_path):
    cfg = parse_config(
        "mode = state-diagram\n"
        f"output_dir = {tmp_path}\n"
        "model.L = 6\n"
        "model.d = 3\n"
        "policy.max_bond = 12\n"
        "fit.delta_L = 2\n"
        "grids.J = 0.02, 0.3\n"
        "grids.T = 0\n")
    manifest = runner.run_experiment(cfg)
    assert all(p["status"] == "success" for p in manifest["points"])
    with open(manifest["files"]["state_diagram.csv"]) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == ",".join(runner.DIAGRAM_HEADER)
    rows = [dict(zip(lines[0].split(","), ln.split(","))) for ln in lines[1:]]
    by_j = {float(r["J"]): r for r in rows}
    # J=0.3 is the high-variance grid point, so its theta is the zero
    assert float(by_j[0.3]["theta"]) == 0.0
    assert float(by_j[0.02]["theta"]) > 0.0
    assert float(by_j[0.3]["upsilon"]) > float(by_j[0.02]["upsilon"])


def test_failed_point_recorded_then_resumed(tmp_path, monkeypatch):
    cfg = equilibrium_config(tmp_path)
    real = runner._POINT_KINDS["equilibrium"]

    def fail_second(payload):
        if payload["J"] == 0.1:
            raise RuntimeError("synthetic outage")
        return real(payload)

    monkeypatch.setitem(runner._POINT_KINDS, "equilibrium", fail_second)
    manifest = runner.run_experiment(cfg)
    statuses = {p["label"]: p["status"] for p in manifest["points"]}
    assert statuses == {"J=0.0,T=0.0": "success", "J=0.1,T=0.0": "failed"}
    assert "synthetic outage" in manifest["points"][1]["error"]

    calls = []

    def counting(payload):
        calls.append(payload["J"])
        return real(payload)

    monkeypatch.setitem(runner._POINT_KINDS, "equilibrium", counting)
    manifest_path = os.path.join(str(tmp_path), "manifest.json")
    resumed = runner.resume_experiment(manifest_path)
    assert calls == [0.1]
    assert all(p["status"] == "success" for p in resumed["points"])
    with open(resumed["files"]["equilibrium.csv"]) as fh:
        assert len(fh.read().splitlines()) == 1 + 2 * 12


def test_worker_pool_output_identical_to_serial(tmp_path):
    serial_dir = tmp_path / "serial"
    pool_dir = tmp_path / "pool"
    m1 = runner.run_experiment(equilibrium_config(serial_dir), workers=1)
    m2 = runner.run_experiment(equilibrium_config(pool_dir), workers=2)
    with open(m1["files"]["equilibrium.csv"], "rb") as fh:
        serial_bytes = fh.read()
    with open(m2["files"]["equilibrium.csv"], "rb") as fh:
        pool_bytes = fh.read()
    assert serial_bytes == pool_bytes
    assert [p["label"] for p in m1["points"]] == \
           [p["label"] for p in m2["points"]]


def test_env_variable_sets_worker_count(tmp_path, monkeypatch):
    seen = {}

    class FakePool:
        def __init__(self, max_workers):
            seen["max_workers"] = max_workers

        def __enter__(self):
            return self

        def __exit__(self, *exc):
            return False

        def map(self, fn, items):
            return [fn(item) for item in items]

    monkeypatch.setattr(runner, "ProcessPoolExecutor", FakePool)
    monkeypatch.setenv("KZTN_WORKERS", "3")
    runner.run_experiment(equilibrium_config(tmp_path))
    assert seen["max_workers"] == 3


def test_validate_mode_builds_one_point_per_check(tmp_path):
    cfg = parse_config(f"mode = validate\noutput_dir = {tmp_path}\n")
    points = runner._build_points(cfg)
    from kztn.validate import CHECKS
    assert [p["label"] for p in points] == [name for name, _ in CHECKS]
    assert all(p["kind"] == "validate" for p in points)
