"""Command line entry point.

    broomsat <stage> --config run.json --out runs/a [--seed N] [--stage-force]

Stages: ingest, indices, traits, align, mask, train, evaluate, importance,
report, pipeline (all of them in order) and synth (writes a synthetic
campaign to ``--out``, or to ``paths.campaign`` when ``--out`` is omitted).

Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import BroomsatError, ConfigError
from .pipeline import STAGES, Pipeline, RunConfig, run_synth
from .weather import CACHE_ENV

COMMANDS = STAGES + ["pipeline", "synth"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="broomsat", description=__doc__.split("\n\n")[0],
                                epilog=f"The weather cache directory can be set with ${CACHE_ENV}.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON file of dotted keys")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--stage-force", action="store_true", help="rerun even if inputs are unchanged")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = RunConfig.load(args.config, overrides)
        if args.command == "synth":
            out = args.out or cfg.path("paths.campaign")
            if out is None:
                raise ConfigError("synth needs --out or paths.campaign")
            truth = run_synth(cfg, out)
            print(f"campaign written: {truth.registry}")
            return 0
        if args.out is None:
            raise ConfigError("--out is required")
        pipe = Pipeline(cfg, args.out, force=args.stage_force)
        results = pipe.run_all() if args.command == "pipeline" else [pipe.run(args.command)]
        for r in results:
            print(f"{r.stage}: {'unchanged' if r.skipped else 'done'} ({len(r.outputs)} files)")
        return 0
    except BroomsatError as exc:
        print(f"broomsat: {exc.code or 'error'}: {exc}", file=sys.stderr)
        return exc.exit_status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
