"""Command-line entry point: ``whiskertwin <subcommand> [--config F] [--out D] [--seed N]``.

Exit codes: 0 success, 1 metric failure, 2 usage/config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, config_from_dict, read_config_json
from .records import IngestionError
from .report import ExperimentReport, compare_to_targets
from .runner import ScenarioError, run

EXIT_OK, EXIT_METRIC, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

SUBCOMMANDS = {
    "simulate": "simulate",
    "calibrate-static": "static_sweep",
    "fatigue": "fatigue",
    "sweep-freq": "freq_sweep",
    "sweep-long": "longitudinal_sweep",
    "sweep-trans": "transverse_sweep",
    "localize": "localize",
    "fit-defaults": "fit_defaults",
}

HELP = {
    "simulate": "one underwater trial written as a record CSV",
    "calibrate-static": "static loading sweep and linear calibration",
    "fatigue": "cyclic loading drift test",
    "sweep-freq": "frequency tracking sweep",
    "sweep-long": "amplitude vs longitudinal distance",
    "sweep-trans": "amplitude vs transverse offset",
    "localize": "round-trip source localisation (or localise a recorded trial)",
    "fit-defaults": "fit drag gain, cross-coupling and floor to the anchor amplitudes",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="scenario JSON; defaults apply when omitted")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="random seed, overrides the config")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whiskertwin", description="Whisker sensor digital twin experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        _common(p)
        p.add_argument("--trials", type=int, help="trials per sweep point, overrides the config")
        if name in ("fatigue", "localize"):
            p.add_argument("--record", type=Path, help="analyse this record CSV instead of simulating")
        if name == "sweep-freq":
            p.add_argument("--full-band", action="store_true",
                           help="sweep to 50 Hz at an elevated analysis rate (outside the validated range)")
    p = sub.add_parser("report", help="re-check a report JSON against its targets")
    p.add_argument("report", type=Path)
    p.add_argument("--tolerances", type=Path, help="JSON {metric: {target, tolerance, mode}} overrides")
    p.add_argument("--quiet", action="store_true")
    return parser


def _scenario(args) -> ScenarioConfig:
    kind = SUBCOMMANDS[args.command]
    data = read_config_json(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a JSON object")
    data = dict(data)
    protocol = dict(data.get("protocol", {}))
    if getattr(args, "record", None):
        protocol["record"] = str(args.record)
    if getattr(args, "full_band", False):
        protocol.update(full_band=True, f_stop_hz=50.0)
    if protocol:
        data["protocol"] = protocol
    if args.trials is not None:
        data["trials"] = args.trials
    return config_from_dict(data, kind, args.seed)


def _print(lines, quiet: bool) -> None:
    if not quiet:
        for line in lines:
            print(line)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    if args.command == "report":
        try:
            report = ExperimentReport.read(args.report)
            table = json.loads(args.tolerances.read_text(encoding="utf-8")) if args.tolerances else None
            summary = compare_to_targets(report, table)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        _print(summary.lines, args.quiet and not summary.failed)
        return summary.exit_code

    try:
        cfg = _scenario(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, IngestionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = compare_to_targets(report)
    _print(summary.lines + [f"artifacts in {args.out}: {', '.join(report.artifacts)}"],
           args.quiet and not summary.failed)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
