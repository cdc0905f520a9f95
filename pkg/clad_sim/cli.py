"""
Command-line interface for the CLAD simulator.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import load_config, load_synthetic_spec
from .core import ExperimentRunner, summarize
from .data.dataset import write_csv
from .data.synthetic import synth_generate
from .exceptions import CladError, ConfigurationError
from .generators.report_generator import ReportGenerator
from .utils.logger import setup_logger

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clad-sim",
        description="Simulate clustered federated anomaly detection and attack classification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s run experiment.yaml
  %(prog)s run experiment.yaml -o results/heterogeneity
  %(prog)s report results/heterogeneity --budget 13MB --budget 26MB
  %(prog)s validate experiment.yaml
  %(prog)s synth synthetic.yaml data/synthetic
        """,
    )

    # Logging options
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    parser.add_argument("--quiet", "-q", action="store_true", help="Suppress console output")
    parser.add_argument("--log-file", help="Save logs to file")

    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run every algorithm, seed and sweep value")
    run.add_argument("config", help="Experiment YAML file")
    run.add_argument("-o", "--output-dir", help="Output directory (default: from config)")

    report = subparsers.add_parser("report", help="Write curve and budget tables from results")
    report.add_argument("results_dir", help="Directory written by 'run'")
    report.add_argument(
        "--budget",
        action="append",
        default=[],
        help="Budget snapshot point such as 13MB or 20GFLOP (repeatable)",
    )

    validate = subparsers.add_parser("validate", help="Check a config without running it")
    validate.add_argument("config", help="Experiment YAML file")

    synth = subparsers.add_parser("synth", help="Write synthetic device CSVs")
    synth.add_argument("spec", help="YAML with a synthetic spec (or a config using one)")
    synth.add_argument("out_dir", help="Directory for device_<k>.csv files")

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    runner = ExperimentRunner(config, Path(args.output_dir) if args.output_dir else None)
    if not args.quiet:
        print(f"🚀 Running experiment: {config.name}")
        print(f"📁 Output directory: {runner.output_dir}")
    results = runner.run()
    if not args.quiet:
        print("\n📊 EXPERIMENT SUMMARY")
        print("=" * 50)
        for label, value in summarize(results):
            print(f"{label}: {value}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    results_dir = Path(args.results_dir)
    if not results_dir.is_dir():
        print(f"Error: Directory '{results_dir}' not found.", file=sys.stderr)
        return EXIT_FAILURE
    written = ReportGenerator(results_dir).generate(args.budget)
    if not written:
        print(f"Error: no run files found under '{results_dir}'.", file=sys.stderr)
        return EXIT_FAILURE
    if not args.quiet:
        print(f"✅ Report written to {results_dir}:")
        for name, path in written.items():
            print(f"   {name}: {path}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if not args.quiet:
        algorithms = ", ".join(a.value for a in config.algorithms)
        runs = len(config.algorithms) * len(config.seeds) * len(config.sweep.values)
        print(f"✅ {args.config} is valid: {algorithms}; K={config.K}; {runs} runs")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = load_synthetic_spec(args.spec)
    out_dir = Path(args.out_dir)
    devices = synth_generate(spec)
    paths = [write_csv(d, out_dir / f"device_{k}.csv") for k, d in enumerate(devices)]
    if not args.quiet:
        print(f"✅ Wrote {len(paths)} device files to {out_dir}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "report": _cmd_report,
    "validate": _cmd_validate,
    "synth": _cmd_synth,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Set up logging
    log_level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    log_file = Path(args.log_file) if args.log_file else None
    setup_logger("clad_sim", log_file=log_file, level=log_level)

    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        print(f"❌ Invalid configuration: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except (CladError, OSError, ValueError) as e:
        if args.verbose:
            import traceback

            traceback.print_exc()
        else:
            print(f"❌ Error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
