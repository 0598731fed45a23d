"""Command line entry point: ``scarbasis <stage> [options]``.

Each subcommand runs the pipeline up to and including that stage; earlier
stages are served from the cache when their inputs are unchanged.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .pipeline import (DESK_CONFIG, EXIT_CODES, FULL_CONFIG, STAGES, PipelineConfig,
                       StageError, run_pipeline)

PRESETS = {"desk": DESK_CONFIG, "full": FULL_CONFIG}

HELP = {
    "orbits": "load the orbit catalog and pick the orbit set for the window",
    "quantize": "Bohr-Sommerfeld levels in the enlarged window",
    "tubes": "width-optimized tube functions",
    "scars": "scar functions by windowed quantum propagation",
    "select": "selective Gram-Schmidt basis",
    "solve": "diagonalize in the selected basis",
    "compare": "errors against the oscillator-basis reference",
    "report": "spectra, reconstructions, densities and figures",
    "all": "every stage (same as report)",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS), default="desk",
                        help="built-in configuration used for keys absent from --config")
    common.add_argument("--output", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for per-level stages")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    common.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration and exit")

    parser = argparse.ArgumentParser(prog="scarbasis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES + ("all",):
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def load_config(args) -> PipelineConfig:
    data = PRESETS[args.preset].to_dict()
    if args.config:
        with open(args.config) as fh:
            user = json.load(fh)
        unknown = set(user) - set(data)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update(user)
    if args.output:
        data["output"] = args.output
    if args.no_plots:
        data["plots"] = False
    return PipelineConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        config.validate()
    except (OSError, ValueError, TypeError) as err:
        print(f"[config] {err}", file=sys.stderr)
        return EXIT_CODES["config"]
    if args.dump_config:
        print(json.dumps(config.to_dict(), indent=1))
        return 0
    try:
        state = run_pipeline(config, args.stage, args.threads)
    except StageError as err:
        print(str(err), file=sys.stderr)
        return err.exit_code
    _print_summary(config, state)
    return 0


def _print_summary(config, state):
    out = print
    out(f"output: {config.output}")
    if state.orbits is not None:
        out(f"orbits: {len(state.orbits)}")
    if state.levels is not None:
        out(f"levels in enlarged window: {len(state.levels)}")
    if state.basis is not None:
        out(f"selected basis: {len(state.basis)}")
    if state.result is not None:
        out("eigenvalues: " + " ".join(f"{e:.6f}" for e in state.result.energies))
    if state.errors:
        n = len(state.errors)
        out(f"mean energy error: {sum(e.energy_error for e in state.errors) / n:.3e}")
        out(f"mean state error: {sum(e.state_error for e in state.errors) / n:.3e}")


if __name__ == "__main__":
    sys.exit(main())
