"""Command-line front end: ``skelxai {generate,train,evaluate,report,ttest}``.

Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import SkelXaiError
from .harness import SCOPES, RunConfig, cmd_evaluate, cmd_generate, cmd_report, cmd_train, cmd_ttest

COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "ttest": cmd_ttest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skelxai", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="JSON document mirroring RunConfig")
    p.add_argument("--seed", type=int, help="global seed; re-derives data, model and perturbation seeds")
    p.add_argument("--workers", type=int)
    p.add_argument("--scope", choices=SCOPES)
    p.add_argument("--methods", help="comma-separated subset of cam,gradcam,random")
    p.add_argument("--out", help="run directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    changes = {}
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.scope is not None:
        changes["scope"] = args.scope
    if args.methods is not None:
        changes["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.out is not None:
        changes["out"] = args.out
    return replace(cfg, **changes) if changes else cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        path = COMMANDS[args.command](cfg)
    except SkelXaiError as exc:
        print(f"skelxai {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"skelxai {args.command}: {exc}", file=sys.stderr)
        return 3
    print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
