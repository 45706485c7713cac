"""Command-line front end: ``bayesppd run|list|describe``."""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesppd", description="Reproduce figure data as CSV tables.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--experiment", "-e", required=True, help="experiment id (see `list`)")
    r.add_argument("--config", help="JSON file with parameter overrides, or a metadata.json to replay")
    r.add_argument("--seed", type=int, default=None, help="random seed (default 0, or the config's seed)")
    r.add_argument("--out", default=None, help="output directory (default results/<experiment>)")
    r.add_argument("--jobs", type=int, default=1, help="worker count for the engine")

    sub.add_parser("list", help="list experiments")
    d = sub.add_parser("describe", help="show an experiment's parameters")
    d.add_argument("experiment")
    return p


def _run(args) -> int:
    params, seed = {}, 0
    if args.config:
        cfg = experiments.load_config(args.config)
        if "params" in cfg:
            if cfg.get("experiment") not in (None, args.experiment):
                raise ValueError(f"config was recorded for {cfg['experiment']!r}, not {args.experiment!r}")
            params, seed = cfg["params"], cfg.get("seed", 0)
        else:
            params = cfg
    if args.seed is not None:
        seed = args.seed
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if args.jobs < 1:
        raise ValueError("--jobs must be at least 1")
    out = args.out or f"results/{args.experiment}"
    spec = experiments.ExperimentSpec(args.experiment, params, seed, out, args.jobs)
    meta = experiments.run(spec)
    print(json.dumps({"experiment": meta["experiment"], "out": str(out),
                      "wall_time_s": round(meta["wall_time_s"], 3), "summary": meta["summary"]}, indent=2))
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("--experiment"):
        argv.insert(0, "run")
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            for exp in experiments.REGISTRY.values():
                print(f"{exp.id:28s} {exp.figure:8s} {exp.description}")
            return 0
        if args.command == "describe":
            exp = experiments.get(args.experiment)
            print(json.dumps({"experiment": exp.id, "figure": exp.figure,
                              "description": exp.description, "params": exp.defaults}, indent=2))
            return 0
        return _run(args)
    except (ValueError, OSError, ArithmeticError, KeyError) as exc:
        print(f"bayesppd: error: {exc}", file=sys.stderr)
        return 2
