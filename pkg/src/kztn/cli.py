"""Command-line entry points: run, validate, resume, report."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import runner, validate
from ._version import __version__
from .config import load_config


def _add_workers(parser):
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: KZTN_WORKERS or 1)")


def _print_point_summary(manifest):
    points = manifest.get("points", [])
    counts = {}
    for p in points:
        counts[p["status"]] = counts.get(p["status"], 0) + 1
    print(f"mode={manifest['mode']} config={manifest['config_hash']} "
          f"version={manifest['code_version']}")
    for p in points:
        line = f"  [{p['status']:>7}] {p['label']}"
        if p.get("error"):
            line += f" ({p['error']})"
        warns = p.get("flags", {}).get("warnings", [])
        if warns:
            line += f" [{len(warns)} warning(s)]"
        print(line)
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
    print(f"points: {summary if summary else 'none'}")
    return all(p["status"] == "success" for p in points)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    manifest = runner.run_experiment(cfg, workers=args.workers)
    ok = _print_point_summary(manifest)
    for name, path in manifest["files"].items():
        print(f"wrote {path}")
    return 0 if ok else 1


def cmd_validate(args) -> int:
    names = args.checks or None
    results = validate.run_all(names=names)
    all_ok = True
    for res in results:
        mark = "PASS" if res.passed else "FAIL"
        print(f"{mark} {res.name}: {res.detail} [{res.seconds:.1f}s]")
        all_ok &= res.passed
    print("all checks passed" if all_ok else "some checks FAILED")
    return 0 if all_ok else 1


def cmd_resume(args) -> int:
    manifest = runner.resume_experiment(args.manifest, workers=args.workers)
    ok = _print_point_summary(manifest)
    return 0 if ok else 1


def cmd_report(args) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    ok = _print_point_summary(manifest)
    fits = manifest.get("files", {}).get("fits.txt")
    if fits and os.path.exists(fits):
        print("--- fits ---")
        with open(fits) as fh:
            print(fh.read().rstrip())
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kztn",
        description="Bose-Hubbard chain simulations: equilibrium scans, "
                    "thermal states, and ramp dynamics with tensor trains.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a config file")
    _add_workers(p_run)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate",
                           help="fast oracle-equivalence checks")
    p_val.add_argument("checks", nargs="*",
                       help="subset of check names (default: all)")
    p_val.set_defaults(func=cmd_validate)

    p_res = sub.add_parser("resume", help="finish an interrupted run")
    p_res.add_argument("manifest", help="path to manifest.json")
    _add_workers(p_res)
    p_res.set_defaults(func=cmd_resume)

    p_rep = sub.add_parser("report", help="summarize a finished run")
    p_rep.add_argument("manifest", help="path to manifest.json")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
