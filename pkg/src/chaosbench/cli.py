"""Command line front end.

Subcommands:
    run        execute an experiment config (JSON, schema 1)
    constants  print contraction-rate machinery for a model
    models     list the drift/interaction/dispersion/initial-law catalogs
    dist       distance between two stored ensemble snapshots
"""

import argparse
import json
import sys

from . import constants as constants_mod
from . import harness, metrics
from ._version import __version__
from .model import (DISPERSIONS, DRIFTS, INTERACTIONS, DissipativityProfile,
                    make_model)
from .particles import INITIALS, load_ensemble


def _spec_token(token):
    """Parse 'name' or 'name:key=val,key=val' into (name, params)."""
    name, _, tail = token.partition(":")
    params = {}
    if tail:
        for item in tail.split(","):
            key, _, val = item.partition("=")
            if not _ or not key:
                raise argparse.ArgumentTypeError(
                    f"bad parameter assignment '{item}' in '{token}'")
            params[key] = float(val)
    return name, params


def _profile_token(token):
    fields = {}
    for item in token.split(","):
        key, _, val = item.partition("=")
        if not _:
            raise argparse.ArgumentTypeError(
                f"bad profile assignment '{item}'")
        fields[key] = float(val)
    return fields


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="chaosbench",
        description="mean-field particle system experiments")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a schema-1 JSON config")
    p_run.add_argument("--outdir", help="override the output directory")
    p_run.add_argument("--workers", type=int, help="override worker count")
    p_run.add_argument("--seed", type=int, help="override the master seed")
    p_run.add_argument("--half-tv", action="store_true",
                       help="report TV on the diameter-1 convention")

    p_const = sub.add_parser("constants",
                             help="contraction-rate report for a model")
    p_const.add_argument("--dim", type=int, default=1)
    p_const.add_argument("--drift", type=_spec_token,
                         default=("linear", {"slope": 1.0}),
                         metavar="NAME[:k=v,...]")
    p_const.add_argument("--interaction", type=_spec_token,
                         default=("zero", {}), metavar="NAME[:k=v,...]")
    p_const.add_argument("--dispersion", type=_spec_token,
                         default=("zero", {}), metavar="NAME[:k=v,...]")
    p_const.add_argument("--profile", type=_profile_token, default=None,
                         metavar="expansion=..,contraction=..,radius=..."
                         ",alpha=..,diffusion=..",
                         help="override the certified envelope")
    p_const.add_argument("--kappa", type=float, default=None,
                         help="cap radius for the jump machinery")
    p_const.add_argument("--eta", type=float, default=0.5)
    p_const.add_argument("--no-eta-search", action="store_true")
    p_const.add_argument("--json", action="store_true",
                         help="emit the full JSON record")

    sub.add_parser("models", help="list catalogs and scenarios")

    p_dist = sub.add_parser("dist",
                            help="distance between two stored snapshots")
    p_dist.add_argument("--metric", choices=("w1", "tv"), default="w1")
    p_dist.add_argument("--bins", default="fd",
                        help="tv histogram bins: integer or 'fd'")
    p_dist.add_argument("--half-tv", action="store_true")
    p_dist.add_argument("first")
    p_dist.add_argument("second")
    return parser


def _cmd_run(args):
    config = harness.ExperimentConfig.from_file(args.config)
    if args.outdir is not None:
        config.outdir = args.outdir
    if args.workers is not None:
        config.workers = args.workers
    if args.seed is not None:
        config.seed = args.seed
    if args.half_tv:
        config.half_tv = True
    report = harness.run(config)
    print(f"wrote {report.csv_path}")
    print(f"wrote {report.json_path}")
    for path in report.figure_paths:
        print(f"wrote {path}")
    failed = 0
    for row in report.rows:
        if row.passed is None:
            continue
        state = "pass" if row.passed else "FAIL"
        failed += 0 if row.passed else 1
        param = "" if row.parameter is None else f"[{row.parameter}]"
        print(f"  {state}  {row.quantity}{param} = {row.estimate:.6g}")
    return 1 if failed else 0


def _cmd_constants(args):
    profile = None if args.profile is None \
        else DissipativityProfile(**args.profile)
    model = make_model(args.dim, args.drift, args.interaction,
                       args.dispersion, profile=profile)
    search = (not args.no_eta_search) and model.profile.alpha < 2.0
    rc = constants_mod.rate_constants(model, kappa=args.kappa,
                                      eta=args.eta, search_eta=search)
    record = rc.as_dict()
    if args.json:
        json.dump(record, sys.stdout, indent=2, sort_keys=True)
        print()
        return 0
    for key in sorted(record):
        value = record[key]
        if value is None:
            continue
        print(f"{key:24s} {value}")
    return 0


def _cmd_models(_args):
    def show(title, catalog):
        print(title)
        for name, entry in catalog.items():
            params = ", ".join(entry.params) if entry.params else "-"
            print(f"  {name:14s} params: {params}")

    show("drifts:", DRIFTS)
    show("interactions:", INTERACTIONS)
    show("dispersions:", DISPERSIONS)
    print("initial laws:")
    for name in INITIALS:
        print(f"  {name}")
    print("scenarios:")
    for name in harness.available_scenarios():
        print(f"  {name}")
    return 0


def _cmd_dist(args):
    a = load_ensemble(args.first)
    b = load_ensemble(args.second)
    if a.dim != b.dim:
        print("snapshots have different dimensions", file=sys.stderr)
        return 2
    if args.metric == "w1":
        if a.dim == 1:
            value = metrics.w1_sorted(a.positions, b.positions)
        else:
            value = metrics.w1_assignment(a.positions, b.positions)
    else:
        bins = args.bins if args.bins == "fd" else int(args.bins)
        value = metrics.tv_histogram(a.positions, b.positions, bins=bins)
        if args.half_tv:
            value *= 0.5
    print("%.17g" % value)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        handler = {"run": _cmd_run, "constants": _cmd_constants,
                   "models": _cmd_models, "dist": _cmd_dist}[args.command]
        return handler(args)
    except harness.ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
