"""
Command-line interface
Exit codes: 0 success, 1 usage or configuration error, 2 runtime error
"""
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from src.pipelines.narrator import SummaryNarrator
from src.pipelines.orchestrator import ExperimentOrchestrator
from src.utils.config import RunConfig
from src.utils.errors import BiprismError, ConfigError
from src.utils.logging_config import setup_logging

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that exits with code 1 on usage errors"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _key_value(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value configuration file")
    common.add_argument("--seed", type=int, help="root random seed")
    common.add_argument("--output-dir", type=Path, help="directory for artifacts")
    common.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--plot", action="store_true", help="also write interactive HTML figures")
    common.add_argument("--set", dest="overrides", action="append", type=_key_value, default=[],
                        metavar="KEY=VALUE", help="override any configuration key (repeatable)")
    common.add_argument("--jobs", type=int, help="worker count (-1 for all cores)")

    parser = CliParser(prog="run_experiment.py",
                       description="Single-photon biprism experiment: simulation and analysis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("whichpath", parents=[common], help="simulate which-path runs and analyse them")
    p.add_argument("--source", choices=["emitter", "laser"], help="photon source kind")
    p.add_argument("--runs", type=_positive_int, default=1)
    p.add_argument("--mean", type=float, help="mean detected photons per pulse")
    p.add_argument("--background", type=float, help="mean background detections per period")
    p.add_argument("--gate-ns", type=float, help="coincidence gate after each trigger")
    size = p.add_mutually_exclusive_group()
    size.add_argument("--detections", "--detections-per-run", dest="detections", type=_non_negative_int,
                      help="detections per run (default 100000)")
    size.add_argument("--pulses", type=_non_negative_int, help="trigger pulses per run")

    p = sub.add_parser("alpha", parents=[common], help="alpha from a recorded timestamp file")
    p.add_argument("--timestamps", type=Path, required=True)
    p.add_argument("--gate-ns", type=float)
    p.add_argument("--counting-time-s", type=str, help="derive N_T from the counting time")

    p = sub.add_parser("g2", parents=[common], help="start-stop delay histogram of a timestamp file")
    p.add_argument("--timestamps", type=Path, required=True)
    p.add_argument("--bin-ns", type=float)
    p.add_argument("--window-periods", type=float)

    p = sub.add_parser("fit-peaks", parents=[common], help="exponential fits of a delay histogram")
    p.add_argument("--histogram", type=Path, required=True)

    p = sub.add_parser("fringes", parents=[common], help="polychromatic fringe pattern at distance z")
    p.add_argument("--z-mm", type=float, required=True)

    p = sub.add_parser("buildup", parents=[common], help="ICCD build-up of single-photon impacts")
    p.add_argument("--snapshots", type=_non_negative_int, required=True)
    p.add_argument("--stride", type=_positive_int, required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--z-mm", type=float, help="compute the pattern at this distance")
    source.add_argument("--pattern", type=Path, help="read the pattern from a CSV file")

    p = sub.add_parser("fitz", parents=[common], help="fit the observation distance to a profile")
    p.add_argument("--profile", type=Path, required=True)
    p.add_argument("--z-min", type=float)
    p.add_argument("--z-max", type=float)

    p = sub.add_parser("tune-visibility", parents=[common],
                       help="spectral width giving a target central visibility")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--z-mm", type=float, required=True)

    sub.add_parser("print-config", parents=[common], help="every key with its effective value")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides = dict(args.overrides)
    flags = {
        "seed.root": args.seed,
        "output.directory": args.output_dir,
        "runtime.n_jobs": args.jobs,
        "source.kind": getattr(args, "source", None),
        "source.mean_detected_per_pulse": getattr(args, "mean", None),
        "source.background_per_gate": getattr(args, "background", None),
        "analysis.gate_ns": getattr(args, "gate_ns", None),
    }
    overrides.update({key: value for key, value in flags.items() if value is not None})
    return overrides


def dispatch(args: argparse.Namespace, orchestrator: ExperimentOrchestrator) -> Dict:
    command = args.command
    if command == "whichpath":
        return orchestrator.run_whichpath(args.runs, args.detections, args.pulses)
    if command == "alpha":
        return orchestrator.run_alpha(args.timestamps, args.gate_ns, args.counting_time_s)
    if command == "g2":
        return orchestrator.run_g2(args.timestamps, args.bin_ns, args.window_periods)
    if command == "fit-peaks":
        return orchestrator.run_fit_peaks(args.histogram)
    if command == "fringes":
        return orchestrator.run_fringes(args.z_mm)
    if command == "buildup":
        return orchestrator.run_buildup(args.snapshots, args.stride, args.z_mm, args.pattern)
    if command == "fitz":
        return orchestrator.run_fitz(args.profile, args.z_min, args.z_max)
    if command == "tune-visibility":
        return orchestrator.run_tune_visibility(args.target, args.z_mm)
    raise UsageError(f"unknown command {command!r}")


def print_config(config: RunConfig):
    table = pd.DataFrame(config.describe())
    print(table.to_string(index=False))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(level=args.log_level)

    try:
        config = RunConfig.load(args.config, _overrides(args))
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "print-config":
        print_config(config)
        return EXIT_OK

    orchestrator = ExperimentOrchestrator(config, plot=args.plot)
    try:
        result = dispatch(args, orchestrator)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except BiprismError as e:
        print(f"❌ Failed at stage: {e.stage or args.command}", file=sys.stderr)
        print(f"💡 Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    print(SummaryNarrator().narrate(result))
    print(f"✅ {len(result['artifacts'])} artifact(s) in {config.output_dir}")
    return EXIT_OK
