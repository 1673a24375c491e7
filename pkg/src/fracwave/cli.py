"""Command line entry point: ``python -m fracwave <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import ConfigError, ExperimentConfig, read_config_fields, run

SUBCOMMANDS = {
    "forward": "forward",
    "convergence": "convergence",
    "invert": "invert",
    "sweep": "sweep",
    "monte-carlo": "monte_carlo",
    "mlf": "mlf",
    "tables": "tables",
}


def _int_list(text):
    return [int(v) for v in text.replace("..", ",").split(",") if v]


def _common(p):
    p.add_argument("--config", help="JSON file; its fields take precedence over flags")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--example")
    p.add_argument("--alpha", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--N", type=int)
    p.add_argument("--r", type=float, help="grading exponent (default: optimal)")
    p.add_argument("--scheme", choices=["sfor", "lifted"])
    p.add_argument("--n-cells", dest="n_cells", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _inverse(p):
    p.add_argument("--sigma", type=float)
    p.add_argument("--n", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rho", type=float)
    g.add_argument("--rho-auto", dest="rho_auto", action="store_true", default=None)
    p.add_argument("--solver", choices=["direct", "gd"])
    p.add_argument("--regularizer", choices=["h1_semi", "h1_full"])
    p.add_argument("--same-grid", dest="same_grid", action="store_true", default=None,
                   help="synthesize data on the inversion grid (debugging only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracwave", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        _common(p)
        if name == "convergence":
            p.add_argument("--Ns", type=_int_list, help="e.g. 16,32,64,128")
            p.add_argument("--N-ref", dest="N_ref", type=int)
        if name in ("invert", "sweep", "monte-carlo"):
            _inverse(p)
        if name == "sweep":
            p.add_argument("--rhos", type=_int_list, help="k1..k2, rho = 10^(-k*step)")
            p.add_argument("--rho-step", dest="rho_step", type=float)
        if name == "monte-carlo":
            p.add_argument("--ns", type=_int_list)
            p.add_argument("--seeds", type=int)
        if name == "mlf":
            p.add_argument("--beta", type=float)
            p.add_argument("--z", type=float)
        if name == "tables":
            p.add_argument("--paper-table", dest="paper_table")
    return parser


def config_from_args(args) -> ExperimentConfig:
    data = {"experiment": SUBCOMMANDS[args.command]}
    skip = {"command", "config", "verbose"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            data[key] = value
    if args.config:
        # fields present in the file override flags; the subcommand always wins
        file_fields = read_config_fields(args.config)
        file_fields.pop("experiment", None)
        data.update(file_fields)
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        result = run(config, stream=sys.stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if config.experiment in ("invert", "sweep", "monte_carlo"):
        stream = sys.stdout if result.path else sys.stderr
        print(result.metrics_line(), file=stream)
    if result.path:
        print(f"wrote {result.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
