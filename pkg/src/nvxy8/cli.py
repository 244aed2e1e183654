"""
Command-line entry point.

Each verb runs one experiment pipeline and writes CSV tables, optional
graymaps, a key = value report and PNG figures to ``--out``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime or
numerical failure.
"""

import argparse
import sys

from . import __version__
from .config import VERBS, ConfigError, apply_overrides, default_config, load_config
from .export import FORMATS, export

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

HELP = {
    "odmr": "ODMR spectrum with a Lorentzian-pair fit",
    "rabi": "Rabi oscillation under constant drive",
    "hahn": "Hahn-echo decay with a double-exponential fit",
    "id-sweep": "instantaneous-diffusion sweep over the central pulse angle",
    "xy8-sweep": "XY8-N tau sweep against an RF test field",
    "xy8-image": "wide-field XY8 image of the field above a strip conductor",
    "compile-waveform": "render a pulse sequence into quantized IQ samples",
}


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="nvxy8", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="verb")
    for verb in VERBS:
        p = sub.add_parser(verb, help=HELP[verb], description=HELP[verb])
        p.add_argument("--config", help="scenario file (INI sections); defaults apply to missing keys")
        p.add_argument("--seed", type=_seed, help="RNG seed, overrides [experiment] seed")
        p.add_argument("--out", default=f"out-{verb}", help="output directory (default: %(default)s)")
        p.add_argument("--format", choices=FORMATS, default="csv", help="field-map output format")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
        p.add_argument("-q", "--quiet", action="store_true", help="do not echo the report")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = VERBS[args.verb]
    try:
        if args.config:
            cfg = load_config(args.config, kind=kind, seed=args.seed)
        else:
            cfg = default_config(kind)
            if args.seed is not None:
                cfg.values["experiment"]["seed"] = args.seed
        apply_overrides(cfg, args.set)
    except ConfigError as exc:
        print(f"nvxy8: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .scenarios import run_scenario

    try:
        result = run_scenario(cfg)
        export(result, args.out, args.format, cfg)
        if not args.no_figures:
            from .plotting import render_figures

            render_figures(result, args.out)
    except Exception as exc:  # any failure past validation is a runtime error
        print(f"nvxy8: {args.verb} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print("\n".join(result.report_lines()))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
