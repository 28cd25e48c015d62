"""Command-line entry point: ``gwoforecast <verb> --config run.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .forecasters import ArchitectureId
from .synth import DEFAULT_ROWS, DEFAULT_SEED, write_synthetic

VERBS = ("ingest", "calibrate", "train", "blend", "evaluate", "report", "pipeline")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwoforecast", description="GWO-calibrated deep ensemble for Brent forecasting")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        s = sub.add_parser(verb)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--seed", type=int, help="override master_seed")
        s.add_argument("--models", help="comma-separated architecture ids (" +
                       ",".join(a.value for a in ArchitectureId) + ")")
        s.add_argument("--out", help="override the output directory")
        s.add_argument("--force", action="store_true", help="recompute even if outputs are current")
        s.add_argument("-q", "--quiet", action="store_true")
    s = sub.add_parser("synth", help="write synthetic brent/usdx/sent CSVs")
    s.add_argument("--out", required=True)
    s.add_argument("--rows", type=int, default=DEFAULT_ROWS)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("-q", "--quiet", action="store_true")
    return p


def _config(args) -> pipeline.RunConfig:
    models = [m.strip() for m in args.models.split(",") if m.strip()] if args.models else None
    return pipeline.RunConfig.from_file(args.config, master_seed=args.seed, out=args.out, models=models)


def run(args) -> object:
    if args.verb == "synth":
        paths = write_synthetic(args.out, args.rows, args.seed).values()
        return {"written": [str(p) for p in paths]}
    cfg = _config(args)
    with pipeline.output_lock(cfg.out_dir):
        if args.verb == "ingest":
            pipeline.cmd_ingest(cfg, args.force)
        elif args.verb == "calibrate":
            pipeline.cmd_calibrate(cfg, force=args.force)
        elif args.verb == "train":
            pipeline.cmd_train(cfg, force=args.force)
        elif args.verb == "blend":
            pipeline.cmd_blend(cfg, args.force)
        elif args.verb == "evaluate":
            pipeline.cmd_evaluate(cfg)
        elif args.verb == "report":
            pipeline.cmd_report(cfg)
        else:
            pipeline.run_all(cfg, args.force)
    return {"verb": args.verb, "out": str(cfg.out_dir), "config_hash": cfg.config_hash()}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(asctime)s %(message)s",
                        stream=sys.stderr)
    try:
        result = run(args)
    except pipeline.PipelineError as exc:
        print(json.dumps({"error": exc.kind, "stage": exc.stage, "message": str(exc)}), file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "stage": getattr(args, "verb", None), "message": str(exc)}),
              file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
