"""Command-line experiment runner.

Subcommands:
  run           execute a strategy x pattern x seed grid and emit reports
  report        recompute reports from archived run logs
  export-rules  turn a q-table snapshot into a plain-text rule listing

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from fqlscale import config as config_mod
from fqlscale import control, fuzzy, harness, learning, metrics, workloads
from fqlscale.errors import ConfigError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # bad usage is a config error (exit 1), not 2
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fqlscale", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment grid")
    p_run.add_argument("--config", help="YAML config file (defaults apply without it)")
    p_run.add_argument("--strategy", choices=config_mod.STRATEGY_NAMES,
                       help="restrict to one strategy (default: config harness.strategies)")
    p_run.add_argument("--pattern", help="restrict to one workload pattern")
    p_run.add_argument("--seeds", help="seed range 'a..b' or comma list (default: config)")
    p_run.add_argument("--out", help="output directory (default: config harness.out_dir)")
    p_run.add_argument("--workers", type=int, help="parallel worker processes")

    p_rep = sub.add_parser("report", help="recompute reports from archived logs")
    p_rep.add_argument("--logs", required=True, help="directory holding *.meta.json archives")
    p_rep.add_argument("--out", help="directory for the emitted reports (default: --logs)")

    p_exp = sub.add_parser("export-rules", help="export a snapshot as rule text")
    p_exp.add_argument("--snapshot", required=True, help="q-table snapshot file")
    p_exp.add_argument("--config", help="config supplying partition term names")
    p_exp.add_argument("--out", help="output file (default: stdout)")
    return parser


def _parse_seed_arg(spec: str):
    if "," in spec:
        try:
            return [int(s) for s in spec.split(",") if s.strip() != ""]
        except ValueError as exc:
            raise ConfigError(f"bad --seeds {spec!r}") from exc
    return config_mod.parse_seeds(spec)


def cmd_run(args) -> int:
    cfg = config_mod.load_config(args.config)
    strategies = [args.strategy] if args.strategy else None
    patterns = [args.pattern] if args.pattern else None
    if patterns and patterns[0] not in workloads.PATTERNS:
        raise ConfigError(
            f"unknown workload pattern {patterns[0]!r}; expected one of {workloads.PATTERNS}"
        )
    seeds = _parse_seed_arg(args.seeds) if args.seeds else None
    out_dir = Path(args.out if args.out else cfg["harness"]["out_dir"])
    reports, failures = harness.run_grid(
        cfg, strategies, patterns, seeds, out_dir=out_dir, workers=args.workers
    )
    paths = harness.emit(reports, out_dir)
    print(f"{len(reports)} runs -> {paths['table']}")
    sys.stdout.write((out_dir / "table.txt").read_text())
    if failures:
        for strategy, pattern, seed, trace in failures:
            print(f"FAILED {strategy}/{pattern}/seed{seed}:\n{trace}", file=sys.stderr)
        return 2
    return 0


def cmd_report(args) -> int:
    logs_dir = Path(args.logs)
    stems = sorted(p.name[: -len(".meta.json")] for p in logs_dir.glob("*.meta.json"))
    if not stems:
        raise ConfigError(f"no archived runs under {logs_dir}")
    reports = [metrics.compute_metrics(control.ExperimentLog.load(logs_dir, stem))
               for stem in stems]
    out_dir = Path(args.out) if args.out else logs_dir
    paths = harness.emit(reports, out_dir)
    print(f"{len(reports)} archived runs -> {paths['table']}")
    sys.stdout.write((out_dir / "table.txt").read_text())
    return 0


def cmd_export_rules(args) -> int:
    qt, _meta = learning.load_snapshot(args.snapshot)
    cfg = config_mod.load_config(args.config)
    partitions = config_mod.build_partitions(cfg)
    rules = fuzzy.RuleBase.full_grid([len(p.sets) for p in partitions], qt.actions)
    if rules.n_rules != qt.n_rules:
        raise ConfigError(
            f"snapshot has {qt.n_rules} rules but the configured partitions "
            f"produce {rules.n_rules}"
        )
    text = fuzzy.rules_text(rules, qt.extract_policy(), partitions)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        return cmd_export_rules(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # runtime failure
        import traceback

        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
