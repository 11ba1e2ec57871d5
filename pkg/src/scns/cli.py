"""Command line entry points: run, ensemble, verify, report.

Exit codes: 0 on success, 1 when a verification suite or simulation
fails, 2 when the configuration cannot be loaded or validated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import build_setup, parse_config
from .ensemble import martingale_test, moment_bound_report, run_ensemble
from .errors import InsufficientPaths, ScnsError
from .recio import read_record_file, write_record_file, write_snapshot
from .report import (
    emit_csv,
    emit_ensemble_csv,
    emit_ensemble_svg,
    emit_svg,
)
from .stepper import run


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="scns",
        description="chemotaxis-fluid simulator and verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one path")
    p_run.add_argument("--config", required=True, help="manifest file")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override noise.seed from the manifest")
    p_run.add_argument("--out", default=".", help="output directory")

    p_ens = sub.add_parser("ensemble", help="run a Monte Carlo ensemble")
    p_ens.add_argument("--config", required=True, help="manifest file")
    p_ens.add_argument("--paths", type=int, default=None,
                       help="override ensemble.paths from the manifest")
    p_ens.add_argument("--seed", type=int, default=None,
                       help="override noise.seed from the manifest")
    p_ens.add_argument("--out", default=".", help="output directory")

    p_ver = sub.add_parser("verify", help="run invariant self-checks")
    p_ver.add_argument("--suite", default="all",
                       choices=("ops", "model", "noise", "energy",
                                "weakform", "all"))

    p_rep = sub.add_parser("report", help="render diagnostics of a run")
    p_rep.add_argument("--in", dest="indir", required=True,
                       help="directory holding records.jsonl or "
                            "ensemble.json")
    p_rep.add_argument("--emit", required=True, choices=("csv", "svg"))
    return parser


def _load_setup(args):
    try:
        with open(args.config, "r", encoding="utf-8") as source:
            text = source.read()
    except OSError as exc:
        print(f"scns: error: --config: cannot read {args.config!r} "
              f"({exc.strerror})", file=sys.stderr)
        return None
    try:
        config = parse_config(text)
        setup = build_setup(config)
    except (ScnsError, ValueError, FloatingPointError) as exc:
        print(f"scns: error: --config: {exc}", file=sys.stderr)
        return None
    if args.seed is not None:
        setup.seed = int(args.seed)
    return setup


def _cmd_run(args):
    setup = _load_setup(args)
    if setup is None:
        return 2
    out = run(setup.initial, setup.params, setup.step_config,
              setup.t_final, seed=setup.seed, ws=setup.ws,
              snapshot_times=setup.snapshot_times,
              c_dagger=setup.constants.c_dagger)
    os.makedirs(args.out, exist_ok=True)
    write_record_file(os.path.join(args.out, "records.jsonl"), out.records)
    for index, (time, state) in enumerate(out.snapshots):
        for variable, field in _state_fields(state):
            write_snapshot(
                os.path.join(args.out, f"{variable}_{index:04d}"),
                field, time, variable)
    for variable, field in _state_fields(out.final_state):
        write_snapshot(os.path.join(args.out, f"{variable}_final"),
                       field, out.final_state.t, variable)
    last = out.records[-1]
    print(f"run complete: t = {last.t:.6g}, {len(out.records)} records, "
          f"mass {last.mass_n:.12g}, dt used {out.dt_used:.3g}")
    return 0


def _state_fields(state):
    from .grid import scalar_field

    yield "n", state.n
    yield "c", state.c
    for axis, comp in enumerate(state.u.arrays):
        yield f"u{axis}", scalar_field(state.u.grid, comp)


def _cmd_ensemble(args):
    setup = _load_setup(args)
    if setup is None:
        return 2
    paths = args.paths if args.paths is not None else setup.ensemble_paths
    try:
        result = run_ensemble(setup.initial, setup.params,
                              setup.step_config, setup.t_final, paths,
                              setup.seed, c_dagger=setup.constants.c_dagger,
                              constants=setup.constants)
    except ScnsError as exc:
        print(f"scns: ensemble failed: {exc}", file=sys.stderr)
        return 1
    payload = {
        "paths": result.paths,
        "times": [float(t) for t in result.times],
        "me_mean": [float(v) for v in result.me_mean],
        "me_stderr": [float(v) for v in result.me_stderr],
        "sup_energy_stats": result.sup_energy_stats,
        "sup_me_stats": {str(p): s for p, s in result.sup_me_stats.items()},
        "moment_ratio": {str(p): moment_bound_report(result, p)
                         for p in (1, 2)},
    }
    try:
        report = martingale_test(result.me_curves)
        payload["martingale"] = {
            "z_scores": [float(z) for z in report.z_scores],
            "max_abs_z": report.max_abs_z,
            "max_increment_corr": report.max_increment_corr,
            "corr_bound": report.corr_bound,
            "passes": report.passes,
        }
    except InsufficientPaths:
        payload["martingale"] = None
    payload["terminal_fields"] = list(_record_names())
    payload["terminal"] = [list(_jsonable(rec.as_tuple()))
                           for rec in result.terminal_records]
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "ensemble.json")
    with open(out_path, "w", encoding="utf-8") as sink:
        json.dump(payload, sink, allow_nan=False, indent=1)
        sink.write("\n")
    z_note = ""
    if payload["martingale"] is not None:
        z_note = f", max |z| = {payload['martingale']['max_abs_z']:.2f}"
    print(f"ensemble complete: {result.paths} paths, "
          f"R(1) = {payload['moment_ratio']['1']:.4g}{z_note}")
    return 0


def _record_names():
    from .diagnostics import FIELD_NAMES

    return FIELD_NAMES


def _jsonable(values):
    for v in values:
        if v is None:
            yield None
        else:
            v = float(v)
            if not np.isfinite(v):
                raise FloatingPointError(
                    f"refusing to serialize non-finite value {v!r}")
            yield v


def _cmd_verify(args):
    from .verify import run_suites

    return 0 if run_suites([args.suite]) else 1


def _cmd_report(args):
    records_path = os.path.join(args.indir, "records.jsonl")
    ensemble_path = os.path.join(args.indir, "ensemble.json")
    wrote = []
    try:
        if os.path.exists(records_path):
            records = read_record_file(records_path)
            if args.emit == "csv":
                wrote += emit_csv(records, args.indir)
            else:
                wrote += emit_svg(records, args.indir)
        if os.path.exists(ensemble_path):
            with open(ensemble_path, "r", encoding="utf-8") as source:
                payload = json.load(source)
            if args.emit == "csv":
                wrote.append(emit_ensemble_csv(
                    payload["times"], payload["me_mean"],
                    payload["me_stderr"], args.indir))
            else:
                wrote.append(emit_ensemble_svg(
                    payload["times"], payload["me_mean"],
                    payload["me_stderr"], args.indir))
    except (ScnsError, FloatingPointError, KeyError) as exc:
        print(f"scns: report failed: {exc}", file=sys.stderr)
        return 1
    if not wrote:
        print(f"scns: error: --in: no records.jsonl or ensemble.json under "
              f"{args.indir!r}", file=sys.stderr)
        return 2
    for path in wrote:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "ensemble": _cmd_ensemble,
    "verify": _cmd_verify,
    "report": _cmd_report,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, matching the config-error code
        return int(exc.code or 0)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
