"""
Command-line interface for netrate.

Provides commands for rate sweeps, training-length optimization and plotting.
"""

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from .config import ExperimentSpec, apply_env_overrides, load_experiment, preset
from .exceptions import ConfigError, EXIT_VALIDATION, NetRateError, exit_code_for
from .experiments import ExperimentResult, run_optimum, run_sweep
from .plotting import PLOT_KINDS, emit_plot
from .utils import setup_logger

logger = logging.getLogger(__name__)


def _load_spec(args, command: str) -> ExperimentSpec:
    """Spec from --config or --preset, then environment, then CLI flags."""
    if args.config and args.preset:
        raise ConfigError("Use either --config or --preset, not both")
    if args.config:
        spec = load_experiment(args.config)
    elif args.preset:
        spec = apply_env_overrides(preset(args.preset, command))
    else:
        raise ConfigError("One of --config or --preset is required")

    data = spec.model_dump()
    if args.seed is not None:
        data["mc"]["seed"] = args.seed
    if args.samples is not None:
        data["mc"]["n_samples"] = args.samples
    if args.out:
        data["output"]["prefix"] = args.out
    if args.workers is not None:
        data["output"]["workers"] = args.workers
    if args.log_level:
        data["logging"]["log_level"] = args.log_level
    try:
        return ExperimentSpec(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid command-line override: {e}") from e


def _print_summary(result: ExperimentResult):
    for path in result.paths:
        print(f"  {path}")
    if result.failures:
        print(f"\n❌ {result.failures} point(s) failed; see the status column")
    else:
        print("\n✅ All points completed")


def _run_experiment(args, command: str, runner) -> int:
    try:
        spec = _load_spec(args, command)
    except NetRateError as e:
        print(f"\n❌ Configuration error: {e}")
        return EXIT_VALIDATION

    setup_logger(level=spec.logging.log_level, log_file=spec.logging.log_file)
    print(f"\n🚀 {command}: {spec.name} ({spec.sweep.kind} sweep, methods: {', '.join(spec.methods)})")
    print(f"  Seed: {spec.mc.seed}, samples: {spec.mc.n_samples}, workers: {spec.output.workers}\n")

    try:
        result = runner(spec)
    except ValidationError as e:
        logger.error(f"{command} failed: {e}")
        print(f"\n❌ Configuration error: {e}")
        return EXIT_VALIDATION
    except NetRateError as e:
        logger.error(f"{command} failed: {e}", exc_info=True)
        print(f"\n❌ Error: {e}")
        return exit_code_for(e)

    _print_summary(result)
    return result.exit_code


def cmd_sweep(args):
    """Run a rate sweep."""
    return _run_experiment(args, "sweep", run_sweep)


def cmd_optimize(args):
    """Run the training-length optimizer over a sweep."""
    return _run_experiment(args, "optimize", run_optimum)


def cmd_plot(args):
    """Plot experiment CSVs to SVG."""
    setup_logger(level=args.log_level or "INFO")
    out = args.out or str(Path(args.csv[0]).with_suffix(".svg"))
    try:
        path = emit_plot(args.csv, args.kind, out)
    except NetRateError as e:
        print(f"\n❌ Plot error: {e}")
        return exit_code_for(e)
    print(f"✅ Wrote {path}")
    return 0


def _add_experiment_args(parser, presets):
    parser.add_argument('--config', type=str, help='Experiment YAML file')
    parser.add_argument('--preset', type=str, choices=presets, help='Built-in figure preset')
    parser.add_argument('--seed', type=int, help='Master seed for Monte Carlo')
    parser.add_argument('--samples', type=int, help='Monte Carlo samples per point')
    parser.add_argument('--out', type=str, help='Output path prefix')
    parser.add_argument('--workers', type=int, help='Concurrent sweep points')
    parser.add_argument(
        '--log-level',
        type=str,
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        help='Logging level (default: INFO)'
    )


def main(argv=None):
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        prog="netrate",
        description="netrate - net ergodic rate and training-length optimization "
                    "for network-MIMO uplink with compressed backhaul",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Net rate vs SNR for C in {1, 5, 10}
  python -m netrate sweep --preset fig3 --seed 7

  # Optimal training length vs backhaul capacity
  python -m netrate optimize --preset fig5 --out results/fig5

  # Custom experiment, 4 points in parallel
  python -m netrate sweep --config configs/fig3.yaml --workers 4

  # Plot one or more CSVs
  python -m netrate plot results/fig3_C1.csv results/fig3_C5.csv --kind rate --out fig3.svg
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Command to execute')

    # sweep command
    parser_sweep = subparsers.add_parser('sweep', help='Net rate over an SNR, tau or backhaul sweep')
    _add_experiment_args(parser_sweep, ['fig3', 'fig4'])
    parser_sweep.set_defaults(func=cmd_sweep)

    # optimize command
    parser_opt = subparsers.add_parser('optimize', help='Optimal training length over a sweep')
    _add_experiment_args(parser_opt, ['fig4', 'fig5', 'fig6'])
    parser_opt.set_defaults(func=cmd_optimize)

    # plot command
    parser_plot = subparsers.add_parser('plot', help='Plot experiment CSVs to SVG')
    parser_plot.add_argument('csv', nargs='+', help='CSV files written by sweep/optimize')
    parser_plot.add_argument('--kind', type=str, choices=PLOT_KINDS, default='rate',
                             help='Plot kind (default: rate)')
    parser_plot.add_argument('--out', type=str, help='Output SVG (default: first CSV with .svg)')
    parser_plot.add_argument(
        '--log-level',
        type=str,
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        help='Logging level (default: INFO)'
    )
    parser_plot.set_defaults(func=cmd_plot)

    # Parse args
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_VALIDATION

    # Execute command
    return args.func(args)


if __name__ == '__main__':
    sys.exit(main())
