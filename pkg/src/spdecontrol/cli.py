"""Command-line interface.

Exit codes: 0 success, 1 oracle check failed, 2 configuration error,
3 numerical divergence (partial tables are still written).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields

from . import oracles
from .config import SMOKE_PRESET, RunConfig, load_config, parse_value
from .errors import ConfigError, DegenerateLikelihoodError, DivergenceError
from .runner import cmd_filter_only, cmd_run, cmd_simulate_truth
from .tables import fmt, write_table

log = logging.getLogger("spdecontrol")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _typed(key):
    def convert(text):
        try:
            return parse_value(key, text)
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from None
    convert.__name__ = key
    return convert


def _config_flags(p):
    p.add_argument("--config", help="flat key = value configuration file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "precondition_mass":
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                           help="apply the inverse mass matrix to SGD steps (default on)")
            continue
        p.add_argument(flag, dest=f.name, type=_typed(f.name), default=None, metavar=f.name.upper())
    p.add_argument("--figures", action="store_true", help="also render PNG figures into <output>/figures")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="spdecontrol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("run", "full filter-and-optimize run"),
                       ("smoke", "reduced preset (n=50, S=100, n_sgd=200, dt=0.02)"),
                       ("simulate-truth", "uncontrolled truth and its observation record")]:
        _config_flags(sub.add_parser(name, help=text))
    p = sub.add_parser("filter-only", help="particle filter on an observation file (zero control)")
    _config_flags(p)
    p.add_argument("--observations", required=True, help="table with header t,dY_1..dY_d")
    p = sub.add_parser("oracle", help="run a reference check and report pass/fail")
    p.add_argument("kind", choices=["riccati", "kalman", "refine"])
    _config_flags(p)
    p = sub.add_parser("plot", help="render figures for an existing run directory")
    p.add_argument("run_dir")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args):
    return {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}


def _emit(rows):
    for key, value in rows:
        print(f"{key},{value if isinstance(value, str) else fmt(value)}")


def _render(out_dir):
    from .plotting import render_run

    for path in render_run(out_dir):
        print(f"figure,{path}")


def _oracle(kind, cfg):
    if kind == "riccati":
        r = oracles.riccati_study(seed=cfg.seed)
        rows = [("optimal_cost", r.optimal_cost), ("sgd_cost", r.sgd_cost),
                ("cost_rel_err", r.cost_rel_err), ("riccati_feedback", r.feedback),
                ("committed_control", r.committed), ("feedback_rel_err", r.feedback_rel_err)]
    elif kind == "kalman":
        r = oracles.kalman_study(seed=cfg.seed)
        rows = [(f"rmse_S{s}", e) for s, e in zip(r.sizes, r.rmse)]
        rows += [(f"ratio_S{s}", q) for s, q in zip(r.sizes[1:], r.ratios)]
        rows += [("stationary_std", r.stationary_std)]
    else:
        r = oracles.refine_study(seed=cfg.seed)
        rows = [(f"cost[{lab}]", c) for lab, c in zip(r.labels, r.costs)]
        rows += [(f"variation[{r.labels[i]} -> {r.labels[j]}]", v)
                 for (i, j), v in zip(r.pairs, r.variations)]
    rows.append(("passed", "true" if r.passed else "false"))
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_table(os.path.join(cfg.output_dir, f"oracle_{kind}.csv"), ["quantity", "value"], rows)
    _emit(rows)
    return EXIT_OK if r.passed else EXIT_FAIL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "plot":
        if not os.path.isdir(args.run_dir):
            print(f"error: no such run directory {args.run_dir!r}", file=sys.stderr)
            return EXIT_CONFIG
        _render(args.run_dir)
        return EXIT_OK
    try:
        preset = SMOKE_PRESET if args.command == "smoke" else None
        cfg = load_config(args.config, _overrides(args), preset)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(done, total):
        log.info("committed control %d/%d", done, total)

    try:
        if args.command in ("run", "smoke"):
            _emit(cmd_run(cfg, progress))
        elif args.command == "simulate-truth":
            cmd_simulate_truth(cfg)
        elif args.command == "filter-only":
            cmd_filter_only(cfg, args.observations)
        else:
            return _oracle(args.kind, cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, DegenerateLikelihoodError) as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    if args.figures:
        _render(cfg.output_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
