"""Command line interface.

Subcommands: compare, stability, spectrum, correlations, conjecture, chi.
Global flags: --config <path>, --seed <u64>, --out <dir>, --replicas <n>,
--threads <n>.  Exit codes: 0 success, 2 config rejection, 3 numerical
failure, 4 all replicas exited before the horizon.
"""
from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, NumericalFailureError
from ..heteroclinic import chi_constant
from .config import ExperimentConfig, load_config
from .outputs import write_outputs
from .runners import run_scenario

_SUBCOMMAND_SCENARIOS = {
    "compare": ("compare",),
    "stability": ("stability_ac_l2", "stability_ac_l4",
                  "stability_mac_l2", "stability_mac_l4"),
    "spectrum": ("spectrum",),
    "correlations": ("correlations",),
    "conjecture": ("conjecture_mac",),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinklab",
        description="Kink dynamics laboratory for the stochastic Allen-Cahn equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("compare", "stability", "spectrum", "correlations", "conjecture"):
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", help="JSON config file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", default="kinklab_out", help="output directory")
        p.add_argument("--replicas", type=int, help="override run.replicas")
        p.add_argument("--threads", type=int, help="override run.threads")
    sub.add_parser("chi", help="print the kink energy constant and exit")
    return parser


def _config_for(args) -> ExperimentConfig:
    allowed = _SUBCOMMAND_SCENARIOS[args.command]
    if args.config:
        config = load_config(args.config)
    else:
        config = ExperimentConfig.from_dict({"scenario": allowed[0]})
    if config.scenario not in allowed:
        raise ConfigError(
            f"scenario {config.scenario!r} does not belong to subcommand "
            f"{args.command!r} (expected one of {', '.join(allowed)})"
        )
    for key in ("seed", "replicas", "threads"):
        value = getattr(args, key)
        if value is not None:
            config.run[key] = value
    config.validate()
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "chi":
        print(f"{chi_constant():.15f}")
        return 0
    try:
        config = _config_for(args)
    except ConfigError as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return 2
    try:
        report, records = run_scenario(config)
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    spectrum = None
    if config.scenario == "spectrum":
        spectrum = {k: report[k] for k in ("whole_line", "ladder",
                                           "constant_phase_gap", "lambda0")}
    try:
        paths = write_outputs(report, records, args.out, spectrum=spectrum)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {paths['summary']}")
    if records and all(r.exit_time is not None for r in records):
        print("all replicas exited before the horizon", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
