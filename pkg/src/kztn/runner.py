"""Experiment orchestration: grid scheduling, CSV emission, manifests.

A run is a list of independent grid points executed by a bounded worker
pool (KZTN_WORKERS or --workers; default 1). Results merge in grid order,
never completion order, so the emitted physics columns are identical for
any worker count. The manifest records config hash, per-point status, and
the rows themselves, which is what makes `resume` cheap: completed points
are replayed from the manifest instead of recomputed.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import lptn, mps, observables, quench, validate
from ._version import __version__
from .config import ExperimentConfig, parse_config, serialize_config
from .errors import ParameterError

SWEEP_HEADER = ("tau_q", "T", "L", "d", "m", "dt", "xi_fin",
                "accumulated_discarded_weight", "wall_time_seconds")
COMPRESSIBILITY_HEADER = ("J", "mu", "rho", "drho_dmu")
DIAGRAM_HEADER = ("J", "T", "n_var", "theta", "xi_L", "upsilon")
VALIDATION_HEADER = ("name", "passed", "detail", "seconds")


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, complex):
        return float(obj.real)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


# ---------------------------------------------------------------------------
# per-point execution (top level so worker processes can import it)

def _thermal_or_ground(model, policy, J, T):
    params = model.replace(J=float(J))
    if T == 0:
        return mps.ground_state(params, policy, occupations="uniform").state
    return lptn.cool(lptn.infinite_temperature_state(params.L, params.d),
                     params, 1.0 / float(T), policy)


def _point_equilibrium(payload):
    cfg_model, policy = payload["model"], payload["policy"]
    J, T = payload["J"], payload["T"]
    state = _thermal_or_ground(cfg_model, policy, J, T)
    stats = observables.site_statistics(state)
    profile = observables.analyze_correlations(state)
    rows = observables.analysis_rows(J, T, stats, profile)
    return {"rows": rows,
            "extra": {"xi_L": profile.xi_L,
                      "center_variance": stats.center_variance}}


def _point_mu_scan(payload):
    cfg_model, policy = payload["model"], payload["policy"]
    J, mu_grid = payload["J"], payload["mu_grid"]
    params = cfg_model.replace(J=float(J))
    fillings = mps.filling_curve(params, policy, mu_grid)
    rows = [{"J": J, "mu": mu, "rho": rho}
            for mu, rho in zip(mu_grid, fillings)]
    extra = {}
    try:
        slope = observables.compressibility(zip(mu_grid, fillings),
                                            window=payload["mu_window"])
        rows.append({"J": J, "drho_dmu": slope})
        extra["drho_dmu"] = slope
    except ParameterError as exc:
        extra["drho_dmu_error"] = str(exc)
    return {"rows": rows, "extra": extra}


def _point_quench(payload):
    cfg_model, policy = payload["model"], payload["policy"]
    tau_q, T = payload["tau_q"], payload["T"]
    protocol = quench.QuenchProtocol(tau_q=float(tau_q),
                                     j_critical=payload["j_critical"],
                                     initial_temperature=float(T))
    result = quench.run_quench(cfg_model, protocol, policy)
    row = {"tau_q": tau_q, "T": T, "L": cfg_model.L, "d": cfg_model.d,
           "m": policy.max_bond, "dt": policy.dt, "xi_fin": result.xi_fin,
           "accumulated_discarded_weight":
               result.accumulated_discarded_weight,
           "wall_time_seconds": result.wall_time_seconds}
    return {"rows": [row], "extra": {"tau_q": tau_q, "T": T,
                                     "xi_fin": result.xi_fin}}


def _point_diagram(payload):
    cfg_model, policy = payload["model"], payload["policy"]
    J, T, delta_L = payload["J"], payload["T"], payload["delta_L"]
    state = _thermal_or_ground(cfg_model, policy, J, T)
    stats = observables.site_statistics(state)
    xi_l = observables.finite_size_xi(observables.correlation_matrix(state))
    bigger = cfg_model.replace(L=cfg_model.L + delta_L)
    state_plus = _thermal_or_ground(bigger, policy, J, T)
    xi_plus = observables.finite_size_xi(
        observables.correlation_matrix(state_plus))
    upsilon = observables.superfluid_quantifier(xi_l, xi_plus, delta_L)
    return {"rows": [], "extra": {"J": J, "T": T,
                                  "n_var": stats.center_variance,
                                  "xi_L": xi_l, "upsilon": upsilon}}


def _point_validate(payload):
    results = validate.run_all(names=[payload["check"]])
    res = results[0]
    row = {"name": res.name, "passed": int(res.passed),
           "detail": res.detail.replace(",", ";"),
           "seconds": res.seconds}
    return {"rows": [row], "extra": {"passed": res.passed}}


_POINT_KINDS = {
    "equilibrium": _point_equilibrium,
    "mu_scan": _point_mu_scan,
    "quench": _point_quench,
    "diagram": _point_diagram,
    "validate": _point_validate,
}


def execute_point(payload):
    """Run one grid point, capturing warnings; never raises."""
    start = time.perf_counter()
    out = {"index": payload["index"], "label": payload["label"]}
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = _POINT_KINDS[payload["kind"]](payload)
        out.update(status="success", rows=result["rows"],
                   extra=result.get("extra", {}),
                   flags={"warnings": [str(w.message) for w in caught]})
    except Exception as exc:
        out.update(status="failed", rows=[], extra={},
                   flags={}, error=f"{type(exc).__name__}: {exc}")
    out["wall_time_seconds"] = time.perf_counter() - start
    return out


# ---------------------------------------------------------------------------
# scheduling

def _build_points(cfg: ExperimentConfig):
    points = []

    def add(kind, label, **kw):
        points.append({"index": len(points), "kind": kind, "label": label,
                       "model": cfg.model, "policy": cfg.policy, **kw})

    if cfg.mode == "equilibrium-scan":
        for J in cfg.grids["J"]:
            for T in cfg.grids["T"]:
                add("equilibrium", f"J={J},T={T}", J=J, T=T)
        if cfg.grids["mu"]:
            for J in cfg.grids["J"]:
                add("mu_scan", f"mu-scan J={J}", J=J,
                    mu_grid=cfg.grids["mu"],
                    mu_window=cfg.fit_windows["mu_window"])
    elif cfg.mode == "quench-sweep":
        for T in cfg.grids["T"]:
            for tau_q in cfg.grids["tau_q"]:
                add("quench", f"tau_q={tau_q},T={T}", tau_q=tau_q, T=T,
                    j_critical=cfg.j_critical_quench)
    elif cfg.mode == "state-diagram":
        for J in cfg.grids["J"]:
            for T in cfg.grids["T"]:
                add("diagram", f"J={J},T={T}", J=J, T=T,
                    delta_L=cfg.fit_windows["delta_L"])
    elif cfg.mode == "validate":
        for name, _ in validate.CHECKS:
            add("validate", name, check=name)
    return points


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit_outputs(cfg, outcomes, out_dir):
    files = {}

    def csv_path(name, rows, header):
        path = os.path.join(out_dir, name)
        observables.write_csv(path, rows, header=header)
        files[name] = path

    if cfg.mode == "equilibrium-scan":
        eq_rows, mu_rows = [], []
        for oc in outcomes:
            target = mu_rows if oc["label"].startswith("mu-scan") else eq_rows
            target.extend(oc["rows"])
        csv_path("equilibrium.csv", eq_rows, observables.CSV_HEADER)
        if any(oc["label"].startswith("mu-scan") for oc in outcomes):
            csv_path("compressibility.csv", mu_rows, COMPRESSIBILITY_HEADER)
    elif cfg.mode == "quench-sweep":
        rows = [row for oc in outcomes for row in oc["rows"]]
        csv_path("sweep.csv", rows, SWEEP_HEADER)
        fits = _kz_fit_report(cfg, outcomes)
        if fits:
            path = os.path.join(out_dir, "fits.txt")
            _write_atomic(path, fits)
            files["fits.txt"] = path
    elif cfg.mode == "state-diagram":
        extras = [oc["extra"] for oc in outcomes
                  if oc["status"] == "success" and oc["extra"]]
        if extras:
            top = max(e["n_var"] for e in extras)
            rows = [{"J": e["J"], "T": e["T"], "n_var": e["n_var"],
                     "theta": top - e["n_var"], "xi_L": e["xi_L"],
                     "upsilon": e["upsilon"]} for e in extras]
        else:
            rows = []
        csv_path("state_diagram.csv", rows, DIAGRAM_HEADER)
    elif cfg.mode == "validate":
        rows = [row for oc in outcomes for row in oc["rows"]]
        csv_path("validation.csv", rows, VALIDATION_HEADER)
    return files


def _kz_fit_report(cfg, outcomes):
    by_t = {}
    for oc in outcomes:
        if oc["status"] != "success" or not oc["extra"]:
            continue
        e = oc["extra"]
        by_t.setdefault(e["T"], []).append((e["tau_q"], e["xi_fin"]))
    window = cfg.fit_windows["kz_window"]
    lines = []
    kappa_by_t = {}
    for T in sorted(by_t):
        points = sorted(by_t[T])
        try:
            kappa, err = quench.fit_kz_exponent(points, window=window)
        except Exception as exc:
            lines.append(f"kz-fit T={T}: unavailable ({exc})")
            continue
        kappa_by_t[T] = kappa
        n_in = sum(1 for tq, _ in points if window[0] <= tq <= window[1])
        lines.append(f"kz-fit T={T}: kappa={kappa:.6f} err={err:.6f} "
                     f"window=[{window[0]}, {window[1]}] points={n_in}")
    if 0.0 in kappa_by_t and len(kappa_by_t) > 1:
        k0 = kappa_by_t[0.0]
        temps = [t for t in sorted(kappa_by_t) if t > 0]
        preds = quench.arrhenius_prediction(k0, cfg.model.mu, temps)
        lines.append(f"arrhenius: kappa_zero={k0:.6f} "
                     f"activation_energy={cfg.model.mu}")
        for t, pred in zip(temps, preds):
            measured = kappa_by_t[t]
            lines.append(f"  T={t}: measured={measured:.6f} "
                         f"predicted={pred:.6f} "
                         f"delta_kappa={k0 - measured:.6f}")
    return "\n".join(lines) + "\n" if lines else ""


def _write_manifest(path, manifest):
    _write_atomic(path, json.dumps(_jsonable(manifest), indent=2) + "\n")


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   reuse: dict | None = None) -> dict:
    """Execute all grid points and write CSVs plus manifest.json.

    ``reuse`` maps point index -> completed outcome (from a previous
    manifest); those points are replayed, not recomputed.
    """
    if workers is None:
        workers = int(os.environ.get("KZTN_WORKERS", "1"))
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    points = _build_points(cfg)
    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest = {"config_hash": config_hash(cfg),
                "code_version": __version__,
                "mode": cfg.mode,
                "config": serialize_config(cfg),
                "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "points": [], "files": {}}

    outcomes = {}
    pending = []
    for p in points:
        prior = (reuse or {}).get(p["index"])
        if prior and prior.get("status") == "success":
            outcomes[p["index"]] = prior
        else:
            pending.append(p)

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for outcome in pool.map(execute_point, pending):
                outcomes[outcome["index"]] = outcome
    else:
        for p in pending:
            outcome = execute_point(p)
            outcomes[outcome["index"]] = outcome
            manifest["points"] = [outcomes[i] for i in sorted(outcomes)]
            _write_manifest(manifest_path, manifest)

    ordered = [outcomes[p["index"]] for p in points]
    manifest["points"] = ordered
    manifest["files"] = _emit_outputs(cfg, ordered, out_dir)
    _write_manifest(manifest_path, manifest)
    return manifest


def resume_experiment(manifest_path: str, workers: int | None = None) -> dict:
    """Finish a previous run: completed points replay, the rest recompute."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = parse_config(manifest["config"])
    reuse = {p["index"]: p for p in manifest.get("points", [])}
    return run_experiment(cfg, workers=workers, reuse=reuse)
