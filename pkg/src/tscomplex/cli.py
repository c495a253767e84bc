"""Command line: ``tscomplex run|bounds|geometry --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys

from .geometry import geometry_report
from .harness import ConfigError, ExperimentConfig, build_from_config, compute_bounds, dump_json, run_experiment


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tscomplex", description="Thompson sampling on complex actions")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [("run", "run the experiment and write traces"),
                           ("bounds", "print the bound report as JSON"),
                           ("geometry", "print divergence geometry as JSON")]:
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=int)
        s.add_argument("--replications", type=int)
        s.add_argument("--horizon", type=int)
        if name == "run":
            s.add_argument("--out", required=True)
            s.add_argument("--snapshot-every", type=int)
        if name == "bounds":
            s.add_argument("--epsilon", type=float)
            s.add_argument("--T", type=float)
            s.add_argument("--enable-bruteforce", action="store_true")
            s.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    for key in ("seed", "replications", "horizon", "snapshot_every"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "epsilon", None) is not None:
        cfg.bounds.epsilon = args.epsilon
    if getattr(args, "T", None) is not None:
        cfg.bounds.T = args.T
    if getattr(args, "enable_bruteforce", False):
        cfg.bounds.enable_bruteforce = True
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "run":
            report = run_experiment(cfg, args.out)
            for name, s in report.agents.items():
                final = s.regret[str(cfg.horizon)]
                slope = "n/a" if s.slope is None else f"{s.slope:.4g}"
                print(f"{name}: regret {final['mean']:.4g} +/- {final['ci95_half_width']:.3g}, slope {slope}")
        elif args.command == "bounds":
            text = dump_json(compute_bounds(cfg).as_dict(), args.out)
            sys.stdout.write(text)
        else:
            built = build_from_config(cfg.instance)
            sys.stdout.write(dump_json(geometry_report(built.instance)))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
