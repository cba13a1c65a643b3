"""Command-line front end.

Subcommands::

    icsplit run MANIFEST                 results.csv and aggregate.csv
    icsplit sweep-rho MANIFEST --values 0,10,20,50
    icsplit sweep-beta MANIFEST --values 1e-7,1e-5,1e-3
    icsplit export-plot CURVE_CSV OUT_SVG
    icsplit split-report MANIFEST --normal-class 5

Exit status: 0 on success, 1 when some grid cells failed, 2 for an invalid
manifest, missing or malformed input files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from icsplit import datasets
from icsplit.manifest import ConfigError, load_data, read_manifest
from icsplit.pipeline import TrainState, split, stage1_train
from icsplit.plot import render_curve
from icsplit.runner import (output_dir, read_curve, run_grid, sweep, write_aggregate,
                            write_curve, write_results)

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("icsplit")


def _floats(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not values:
        raise argparse.ArgumentTypeError("need at least one value")
    return values


def _manifest(args):
    m = read_manifest(args.manifest, args.set)
    if getattr(args, "workers", None):
        m = replace(m, workers=args.workers)
    return m


def cmd_run(args) -> int:
    m = _manifest(args)
    out = output_dir(m, args.out)
    rows = run_grid(m)
    write_results(rows, out / "results.csv")
    write_aggregate(rows, out / "aggregate.csv", m.methods)
    failed = sum(not r.ok for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} cells succeeded; tables in {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_sweep(args, param: str) -> int:
    m = _manifest(args)
    if param == "rho" and any(not 0 <= v <= 100 for v in args.values):
        raise ConfigError("rho values must lie in [0, 100]")
    if param == "beta" and any(v <= 0 for v in args.values):
        raise ConfigError("beta values must be positive")
    out = output_dir(m, args.out)
    points, rows = sweep(m, param, args.values)
    write_curve(points, param, out / f"curve_{param}.csv")
    write_results(rows, out / f"sweep_{param}_results.csv")
    for v, s in points:
        print(f"{param}={v:g}: mean {s.mean:.4f} std {s.std:.4f} "
              f"({s.n_cells - s.n_failed}/{s.n_cells} cells)")
    return EXIT_PARTIAL if any(s.n_failed for _, s in points) else EXIT_OK


def cmd_sweep_rho(args) -> int:
    return _cmd_sweep(args, "rho")


def cmd_sweep_beta(args) -> int:
    return _cmd_sweep(args, "beta")


def cmd_export_plot(args) -> int:
    try:
        param, x, mean, std = read_curve(args.curve)
        svg = render_curve(x, mean, std, x_label=args.x_label or param, title=args.title,
                           log_x={"auto": None, "yes": True, "no": False}[args.log_x])
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    Path(args.svg).write_text(svg)
    print(f"wrote {args.svg}")
    return EXIT_OK


def cmd_split_report(args) -> int:
    m = _manifest(args)
    train_set, test_set = load_data(m.data)
    seed = m.seeds[0] if args.seed is None else args.seed
    cls = m.classes[0] if args.normal_class is None else args.normal_class
    exp = datasets.make_experiment(train_set, cls, m.n_train, seed, test_set=test_set,
                                   n_test_normal=m.n_test_normal,
                                   n_test_abnormal=m.n_test_abnormal,
                                   val_fraction=m.val_fraction)
    cfg = replace(m.train, seed=seed)
    params = stage1_train(exp.train, cfg, TrainState.fresh(cfg))
    assignment = split(params, exp.train, cfg.rho, cfg.ssim)
    out = output_dir(m, args.out)
    path = out / f"split_class{cls}_seed{seed}.csv"
    assignment.to_csv(path)
    order = np.argsort(assignment.scores, kind="stable")
    k = min(args.top, len(order))
    print(f"class {cls}, seed {seed}: {int(assignment.atypical.sum())} of {len(order)} "
          f"samples atypical at rho={cfg.rho:g}; assignment in {path}")
    for name, idx in (("lowest", order[:k]), ("highest", order[::-1][:k])):
        print(f"{name} SSIM (training index / dataset row / score):")
        for i in idx:
            print(f"  {i:6d} {exp.train_index[i]:7d}  {assignment.scores[i]:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icsplit", description="One-class feature learning by intra-class splitting.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-vv for per-epoch losses)")
    sub = parser.add_subparsers(dest="command", required=True)

    def manifest_args(p, workers=True):
        p.add_argument("manifest", help="experiment manifest (INI-style key = value)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a manifest entry; may be repeated")
        p.add_argument("--out", help="output directory (default: [output] directory)")
        if workers:
            p.add_argument("--workers", type=int, help="parallel worker processes")

    p = sub.add_parser("run", help="evaluate every class x method x seed cell")
    manifest_args(p)
    p.set_defaults(func=cmd_run)

    for name, func, help_ in (("sweep-rho", cmd_sweep_rho, "vary the atypical ratio rho (%%)"),
                              ("sweep-beta", cmd_sweep_beta, "vary beta1 = beta2")):
        p = sub.add_parser(name, help=help_)
        manifest_args(p)
        p.add_argument("--values", type=_floats, required=True,
                       help="comma-separated parameter values")
        p.set_defaults(func=func)

    p = sub.add_parser("export-plot", help="render a curve CSV as SVG")
    p.add_argument("curve")
    p.add_argument("svg")
    p.add_argument("--title")
    p.add_argument("--x-label")
    p.add_argument("--log-x", choices=("auto", "yes", "no"), default="auto")
    p.set_defaults(func=cmd_export_plot)

    p = sub.add_parser("split-report", help="stage-1 training and the typical/atypical split")
    manifest_args(p, workers=False)
    p.add_argument("--normal-class", type=int, help="default: first manifest class")
    p.add_argument("--seed", type=int, help="default: first manifest seed")
    p.add_argument("--top", type=int, default=10, help="samples to list at each end")
    p.set_defaults(func=cmd_split_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, datasets.DatasetFormatError) as exc:
        print(f"icsplit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
