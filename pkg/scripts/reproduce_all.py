"""Run every registered experiment with default parameters.

    python scripts/reproduce_all.py --out results --jobs 4 [--skip fig6-mlp-sweep]

Each experiment writes into results/<experiment-id>/. The MLP sweep is by far
the slowest (tens of minutes on one core).
"""

import argparse
import json
import sys
from pathlib import Path

from bayesppd.experiments import REGISTRY, ExperimentSpec, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--skip", nargs="*", default=[], metavar="ID")
    args = ap.parse_args(argv)

    unknown = set(args.skip) - set(REGISTRY)
    if unknown:
        ap.error(f"unknown experiment ids: {sorted(unknown)}")
    for exp_id in REGISTRY:
        if exp_id in args.skip:
            continue
        meta = run(ExperimentSpec(exp_id, {}, args.seed, args.out / exp_id, args.jobs))
        print(f"{exp_id:28s} {meta['wall_time_s']:8.1f} s  {json.dumps(meta['summary'])[:120]}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
