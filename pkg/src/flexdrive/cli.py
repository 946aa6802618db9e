"""Command line interface.

Subcommands:
  simulate  run one configured experiment and write its artifacts
  batch     run every *.cfg file in a directory
  metrics   recompute the error report from an existing trajectory CSV

Exit codes: 0 success, 2 configuration error, 3 watchdog divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .geometry import Posture
from .harness import run_experiment
from .metrics import compute_metrics, format_report, format_report_kv, read_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_WATCHDOG = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexdrive",
        description="Posture-regulation simulator for a two-axle "
        "compliant-framed differential-drive robot",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one experiment")
    sim.add_argument("--config", required=True, help="key-value config file")
    sim.add_argument("--case", type=int, choices=(1, 2, 3), help="override case")
    sim.add_argument("--seed", type=int, help="override master seed")
    sim.add_argument("--duration", type=float, help="override duration (s)")
    sim.add_argument("--out", help="override output directory")
    sim.add_argument("--plot", action="store_true", help="also write an SVG plot")
    sim.add_argument(
        "--full-rate", action="store_true",
        help="log every plant sub-step instead of one row per controller period",
    )

    bat = sub.add_parser("batch", help="run every *.cfg in a directory")
    bat.add_argument("--config-dir", required=True)
    bat.add_argument("--out", help="override output directory for all runs")

    met = sub.add_parser("metrics", help="recompute metrics from a trajectory CSV")
    met.add_argument("--csv", required=True)
    met.add_argument(
        "--config",
        help="config snapshot providing the target posture (default: origin)",
    )
    met.add_argument("--kv", action="store_true", help="key-value output")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    if args.case is not None:
        cfg.case = args.case
    if args.seed is not None:
        cfg.seed = args.seed
    if args.duration is not None:
        cfg.duration = args.duration
    if args.out is not None:
        cfg.out_dir = args.out
    if args.full_rate:
        cfg.full_rate = True
    cfg.validate()


def _cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    artifacts = run_experiment(cfg, plot=args.plot)
    print((artifacts.run_dir / "report.txt").read_text(), end="")
    print(f"artifacts: {artifacts.run_dir}")
    if artifacts.result.aborted:
        print(f"ABORTED: {artifacts.result.abort_reason}", file=sys.stderr)
        return EXIT_WATCHDOG
    return EXIT_OK


def _cmd_batch(args: argparse.Namespace) -> int:
    config_dir = Path(args.config_dir)
    paths = sorted(config_dir.glob("*.cfg"))
    if not paths:
        print(f"config error: no *.cfg files in {config_dir}", file=sys.stderr)
        return EXIT_CONFIG
    worst = EXIT_OK
    for path in paths:
        try:
            cfg = load_config(path)
            if args.out is not None:
                cfg.out_dir = args.out
        except ConfigError as exc:
            print(f"config error in {path.name}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        artifacts = run_experiment(cfg, run_name=path.stem)
        status = "ABORTED" if artifacts.result.aborted else "ok"
        print(f"{path.name}: {status} -> {artifacts.run_dir}")
        if artifacts.result.aborted:
            worst = EXIT_WATCHDOG
    return worst


def _cmd_metrics(args: argparse.Namespace) -> int:
    target = Posture(0.0, 0.0, 0.0)
    if args.config:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        target = cfg.target
    try:
        rows = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        print(f"error reading {args.csv}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not rows:
        print(f"error: {args.csv} has no data rows", file=sys.stderr)
        return EXIT_CONFIG
    report = compute_metrics(rows[-1], target)
    if args.kv:
        print(format_report_kv(report), end="")
    else:
        print(format_report({Path(args.csv).stem: report}), end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "simulate": _cmd_simulate,
        "batch": _cmd_batch,
        "metrics": _cmd_metrics,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
