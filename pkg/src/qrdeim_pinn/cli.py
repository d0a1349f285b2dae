"""Command line entry point: ``qrdeim-pinn {run,sweep,reference,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import experiment
from ._kernels import tune_allocator
from .problems import PROBLEM_NAMES
from .reference import GridSpec, cached_reference, save_reference

log = logging.getLogger("qrdeim_pinn")


def _cmd_run(args) -> dict:
    cfg = experiment.load_config(args.config)
    out = Path(args.out)
    if args.seed is not None:
        record = experiment.run(cfg, args.seed, out)
        return {"seed": args.seed, "final_error": record.final_error, "failed_at": record.failed_at,
                "out": str(out)}
    report = experiment.run_repeats(cfg, out)
    experiment.write_report([report], out)
    return report.to_dict()


def _cmd_sweep(args) -> dict:
    with open(args.config) as fh:
        base = yaml.safe_load(fh)
    with open(args.grid) as fh:
        grid = yaml.safe_load(fh)
    reports = experiment.sweep(base, grid, args.out)
    return {"cells": len(reports), "failed_cells": sum(r.n == 0 for r in reports),
            "out": str(args.out)}


def _cmd_reference(args) -> dict:
    grid = GridSpec(args.nx, args.nt)
    ref = cached_reference(args.pde, grid, args.cache, args.allen_cahn_sign)
    path = Path(args.out)
    if path.suffix != ".ref":
        path = path / f"{args.pde}_{grid.nx}x{grid.nt}.ref"
    save_reference(ref, path)
    return {"pde": args.pde, "path": str(path), "solver": ref.solver}


def _cmd_report(args) -> dict:
    reports = experiment.report_from_dir(args.inp)
    if not reports:
        raise FileNotFoundError(f"no summary.json files under {args.inp}")
    experiment.write_report(reports, args.out)
    return {"rows": [[r.label, r.mean, r.std, r.n] for r in reports]}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrdeim-pinn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one seed, or all configured repeats")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None,
                   help="single seed; omit to run seeds seed..seed+repeats-1")
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="ablation grid over dotted config keys")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", required=True, help='YAML mapping, e.g. {"sampler.params.threshold": [0.1, 0.005]}')
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sweep)

    f = sub.add_parser("reference", help="build and save a reference grid")
    f.add_argument("--pde", required=True, choices=PROBLEM_NAMES)
    f.add_argument("--out", required=True, help="directory or .ref file path")
    f.add_argument("--nx", type=int, default=256)
    f.add_argument("--nt", type=int, default=100)
    f.add_argument("--allen-cahn-sign", type=int, choices=(-1, 1), default=-1)
    f.add_argument("--cache", default=None)
    f.set_defaults(func=_cmd_reference)

    a = sub.add_parser("report", help="aggregate summary.json files into a table")
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    tune_allocator()
    try:
        result = args.func(args)
    except Exception as exc:
        print(json.dumps({"status": "error", "type": type(exc).__name__, "message": str(exc)}))
        return 1
    print(json.dumps({"status": "ok", **result}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
