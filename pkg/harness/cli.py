"""
Command line interface.

    python -m harness cluster --config scenarios/two_player.cfg --samples 50
    python -m harness predict --config scenarios/three_player.cfg --runs 30 --mode inference
    python -m harness plan    --config scenarios/three_player.cfg --runs 30 --mode map-aligned
    python -m harness replay  out/plan/map-aligned

Results are printed as JSON on stdout. Failures print one JSON error
record on stderr. Exit codes: 0 success, 1 error, 2 usage, 3 replay mismatch.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from simulator.errors import StrategyAlignmentError

from .config import ScenarioConfig, runtime_defaults
from .experiments import PLAN_MODES, PREDICT_MODES, cmd_cluster, cmd_plan, cmd_predict, cmd_replay

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISMATCH = 3


def build_parser() -> argparse.ArgumentParser:
    defaults = runtime_defaults()
    parser = argparse.ArgumentParser(
        prog="harness",
        description="Equilibrium enumeration, prediction and MAP-aligned planning experiments",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the scenario)")
    common.add_argument("--out", default=defaults["out_dir"], help="archive root directory")
    common.add_argument("--threads", type=int, default=defaults["threads"], help="worker count")
    common.add_argument("--log-level", default=defaults["log_level"], help="logging level")
    common.add_argument("--quiet", action="store_true", help="no progress bars")

    sub = parser.add_subparsers(dest="command", required=True)

    cluster = sub.add_parser("cluster", parents=[common], help="enumerate equilibria from random seeds")
    cluster.add_argument("--config", required=True, help="scenario file")
    cluster.add_argument("--samples", type=int, default=50, help="number of random seeds")

    predict = sub.add_parser("predict", parents=[common], help="prediction-error experiment")
    predict.add_argument("--config", required=True, help="scenario file")
    predict.add_argument("--runs", type=int, default=30)
    predict.add_argument("--mode", choices=PREDICT_MODES, default="inference")

    plan = sub.add_parser("plan", parents=[common], help="closed-loop planning experiment")
    plan.add_argument("--config", required=True, help="scenario file")
    plan.add_argument("--runs", type=int, default=30)
    plan.add_argument("--mode", choices=PLAN_MODES, default="map-aligned")

    replay = sub.add_parser("replay", parents=[common], help="re-simulate archives and compare")
    replay.add_argument("archive", help="run directory or any directory above run directories")
    return parser


def _error(err: Exception) -> None:
    sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err)}) + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_USAGE if exit_.code else EXIT_OK

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "replay":
            report = cmd_replay(args.archive, quiet=args.quiet)
            print(json.dumps(report.to_dict(), indent=2))
            return EXIT_OK if report.passed else EXIT_MISMATCH

        for name in ("runs", "samples"):
            if getattr(args, name, 1) < 1:
                parser.print_usage(sys.stderr)
                _error(ValueError(f"--{name} must be positive"))
                return EXIT_USAGE

        config = ScenarioConfig.load(args.config).with_overrides(seed=args.seed)
        if args.command == "cluster":
            result = cmd_cluster(config, args.samples, args.out, args.threads, args.quiet)
        elif args.command == "predict":
            result = cmd_predict(config, args.runs, args.mode, args.out, args.threads, args.quiet)
        else:
            result = cmd_plan(config, args.runs, args.mode, args.out, args.threads, args.quiet)
    except StrategyAlignmentError as err:
        logger.debug("command failed", exc_info=True)
        _error(err)
        return EXIT_ERROR

    print(json.dumps(result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
