"""Command-line entry point.

Subcommands: simulate, estimate, study, asymptotics, gallery.  All of
them accept ``--config FILE`` (JSON; missing file sections fall back to
desk-scale defaults) and repeated ``--set key=value`` overrides with
dotted keys, e.g. ``--set grid.n_time=4000``.

Exit codes: 0 success, 1 validation/configuration error, 2 runtime or
numeric error, 3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import asymptotics
from .config import FullConfig, load_config
from .errors import FieldFormatError, SpdefitError, ValidationError
from .estimate import Regime, estimate_parameters, simulate_and_estimate
from .fieldfile import dump_json, read_field, simulate_to_file
from .model import SpdeParams, derived_params
from .reportio import (record_to_dict, study_config_to_dict, write_gallery_entry,
                       write_study_report)
from .study import run_study


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="JSON configuration file (defaults apply when omitted)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a configuration key (dotted path); repeatable")


def _load(args) -> FullConfig:
    return load_config(args.config, args.overrides)


def _emit(doc: dict, out: str | None) -> None:
    if out is None:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        dump_json(doc, out)


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    simulate_to_file(cfg.params, cfg.grid, cfg.seed, args.out)
    print(f"wrote {args.out}: {cfg.grid.n_time + 1} slices of {cfg.grid.n_space} values")
    return 0


def _cmd_estimate(args) -> int:
    cfg = _load(args)
    if args.field is not None:
        dataset = read_field(args.field)
        record = estimate_parameters(dataset, cfg.est)
    else:
        record = simulate_and_estimate(cfg.params, cfg.grid, cfg.est, cfg.seed)
    _emit({"config": cfg.document, "record": record_to_dict(record)}, args.out)
    return 0


def _cmd_study(args) -> int:
    cfg = _load(args)
    study = cfg.study_config()
    every = max(1, study.replications // 20)

    def progress(rep_id: int) -> None:
        if (rep_id + 1) % every == 0 or rep_id + 1 == study.replications:
            print(f"replication {rep_id + 1}/{study.replications}",
                  file=sys.stderr, flush=True)

    report = run_study(study, progress=progress)
    write_study_report(report, args.out)
    print(f"wrote report to {args.out} ({len(report.records)} records, "
          f"{len(report.failures)} failures)")
    return 0


def _cmd_asymptotics(args) -> int:
    try:
        values = [float(v) for v in args.theta.split(",")]
    except ValueError:
        raise ValidationError(f"--theta must be four comma-separated numbers, got {args.theta!r}")
    if len(values) != 4:
        raise ValidationError(f"--theta must have four components, got {len(values)}")
    params = SpdeParams(*values)
    regime = Regime(args.regime)
    derived = derived_params(params)
    zeta = (derived.sigma0_sq, derived.eta)
    gamma = asymptotics.gamma_constant(args.gamma_tol)
    u, v = asymptotics.uv_matrices(zeta, args.delta)
    doc = {
        "theta": values,
        "derived": {"sigma0_sq": derived.sigma0_sq, "eta": derived.eta,
                    "lambda1": derived.lambda1},
        "delta_margin": args.delta,
        "gamma": gamma,
        "u": u.tolist(),
        "v": v.tolist(),
        "contrast_cov": asymptotics.contrast_cov(zeta, args.delta, gamma=gamma).tolist(),
        "adaptive_cov": asymptotics.adaptive_cov(params, regime).tolist(),
    }
    _emit(doc, args.out)
    return 0


def _cmd_gallery(args) -> int:
    cfg = _load(args)
    outdir = Path(args.out)
    for idx, params in enumerate(cfg.gallery_params):
        entry_dir = outdir / f"entry_{idx:02d}"
        write_gallery_entry(entry_dir, params, cfg.grid, cfg.seed)
        print(f"{entry_dir}: theta = {params.as_tuple()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdefit",
                                     description="Simulate and estimate the parabolic SPDE model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a field and write it to a file")
    _add_config_options(p)
    p.add_argument("--out", default="field.bin", help="output field file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="estimate parameters from a field file or a fresh simulation")
    _add_config_options(p)
    p.add_argument("--field", default=None, help="existing field file; omitted = fused simulate+estimate")
    p.add_argument("--out", default=None, help="output JSON (stdout when omitted)")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("study", help="run a Monte Carlo study and write its report")
    _add_config_options(p)
    p.add_argument("--out", required=True, help="output directory for report.json and CSVs")
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("asymptotics", help="print the limit covariance objects for a parameter point")
    p.add_argument("--theta", required=True, metavar="T0,T1,T2,SIGMA")
    p.add_argument("--regime", choices=["fixed_t", "large_t"], default="fixed_t")
    p.add_argument("--delta", type=float, default=0.05, help="spatial boundary cutoff")
    p.add_argument("--gamma-tol", type=float, default=1e-12, dest="gamma_tol")
    p.add_argument("--out", default=None, help="output JSON (stdout when omitted)")
    p.set_defaults(func=_cmd_asymptotics)

    p = sub.add_parser("gallery", help="sample-path gallery: fields plus cross-section CSVs")
    _add_config_options(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gallery)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FieldFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SpdefitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
