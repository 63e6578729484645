"""Command line front end: ``gfbeam run`` and ``gfbeam compare``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import GfBeamError
from .pipeline import WORKERS_ENV, RunConfig, compare, format_report, run


def _overrides(args):
    out = {}
    if args.scene:
        out["scene"] = args.scene
    if args.gf == "freefield":
        out["gf"] = {"freefield": {}}
    elif args.gf == "ism":
        out["gf"] = {"ism": {"max_order": args.max_order}}
    elif args.gf == "import":
        if not args.gf_path:
            raise GfBeamError("CONFIG", "--gf import needs --gf-path")
        out["gf"] = {"import": {"path": args.gf_path}}
    if args.preset:
        out["steering"] = {"preset": args.preset}
    elif args.alpha is not None or args.beta is not None:
        if args.alpha is None or args.beta is None:
            raise GfBeamError("CONFIG", "--alpha and --beta go together")
        out["steering"] = {"alpha": args.alpha, "beta": args.beta}
    if args.frequencies:
        out["frequencies"] = args.frequencies
    if args.output:
        out["output"] = os.path.abspath(args.output)
    if args.diagonal_removal:
        out["diagonal_removal"] = True
    if args.map_csv:
        out["map_csv"] = True
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="gfbeam", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a config and write maps, criteria and a manifest")
    r.add_argument("config", help="run config (YAML)")
    r.add_argument("--scene", help="scene config path, overriding the run config")
    r.add_argument("--gf", choices=("freefield", "ism", "import"))
    r.add_argument("--max-order", type=int, default=3)
    r.add_argument("--gf-path")
    r.add_argument("--preset", choices=("I", "II", "III", "IV"))
    r.add_argument("--alpha", type=float)
    r.add_argument("--beta", type=float)
    r.add_argument("--frequencies", type=float, nargs="+")
    r.add_argument("--output", "-o")
    r.add_argument("--diagonal-removal", action="store_true")
    r.add_argument("--map-csv", action="store_true")
    r.add_argument("--workers", type=int, help=f"worker threads (default ${WORKERS_ENV} or 1)")

    c = sub.add_parser("compare", help="criteria differences (b - a) between two runs")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--output", "-o", help="write the report as JSON (and CSV next to it)")
    c.add_argument("--json", action="store_true", help="print the full report as JSON")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.workers is not None:
                os.environ[WORKERS_ENV] = str(args.workers)
            config = RunConfig.load(args.config, _overrides(args))
            manifest = run(config)
            print(f"{manifest['n_maps']} maps written to {config.output}")
        else:
            report = compare(args.run_a, args.run_b, args.output)
            print(json.dumps(report, indent=2, sort_keys=True) if args.json else format_report(report))
    except GfBeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
