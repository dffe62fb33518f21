"""Command line entry point.

Subcommands::

    kernel-check   heat-kernel invariant suite
    simulate       one path, full series
    ensemble       many paths, martingale summary
    lambda         exponent estimate vs the closed form
    osc            oscillation scaling
    ratio          sup / L1 gap
    peaks          tall-peak frequencies from a spike
    valleys        mass-exit frequencies from a spike
    clt            normality of the centred log-solution (soft)
    report         render a stored summary

Exit status: 0 pass, 1 a check failed, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from .checks import kernel_suite
from .config import ConfigError, load_config
from .experiments import Check, run_experiment
from .records import FORMATS, dumps, read_json, write_record

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_COMMANDS = {
    "kernel-check": "heat-kernel invariant suite",
    "simulate": "single path, full series dump",
    "ensemble": "parallel paths and martingale summary",
    "lambda": "exponent estimate against the closed-form value",
    "osc": "oscillation of log u over time",
    "ratio": "sup/L1 gap against beta log log t + C",
    "peaks": "tall-peak frequencies from a spike start",
    "valleys": "mass-exit frequencies from a spike start",
    "clt": "Kolmogorov-Smirnov normality of the centred log-solution",
    "report": "render a stored JSON summary",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (or the name of a bundled example)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--paths", type=int, help="override the number of paths")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--format", choices=FORMATS, default="csv", help="series file format")
    parser = argparse.ArgumentParser(prog="shelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _print_checks(name: str, checks: list[Check], out) -> None:
    for c in checks:
        tag = "PASS" if c.passed else ("WARN" if c.soft else "FAIL")
        extra = f"  ({c.detail})" if c.detail else ""
        print(f"[{tag}] {name}.{c.name}: {c.value:.6g} vs {c.threshold:.6g}{extra}", file=out)


def _kernel_check(args, out) -> int:
    checks = kernel_suite(seed=args.seed or 0)
    _print_checks("kernel", checks, out)
    ok = all(c.passed for c in checks)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        summary = {"experiment": "kernel-check", "passed": ok,
                   "checks": [c.__dict__ for c in checks]}
        (Path(args.out) / "summary.json").write_text(dumps({"schema_version": "shelab.run/1", **summary}))
    return EXIT_PASS if ok else EXIT_FAIL


def _flatten(prefix: str, obj, rows: list) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, rows)
    elif isinstance(obj, list) and obj and isinstance(obj[0], dict):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, obj))


def _report(args, out) -> int:
    if not args.out:
        print("report: --out must name a run directory or summary.json", file=sys.stderr)
        return EXIT_CONFIG
    target = Path(args.out)
    target = target / "summary.json" if target.is_dir() else target
    if not target.exists():
        print(f"report: {target} not found", file=sys.stderr)
        return EXIT_CONFIG
    summary = read_json(target)
    if args.format == "jsonl":
        for c in summary.get("checks", []):
            print(json.dumps(c), file=out)
        print(json.dumps({"metrics": summary.get("metrics", {})}), file=out)
    else:
        rows: list = []
        _flatten("", {"passed": summary.get("passed"), "checks": summary.get("checks", []),
                      "metrics": summary.get("metrics", {})}, rows)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerows(rows)
        out.write(buf.getvalue())
    return EXIT_PASS if summary.get("passed", False) else EXIT_FAIL


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors (unknown flags included) with status 2
        return int(exc.code) if exc.code is not None else EXIT_PASS
    if args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "kernel-check":
        return _kernel_check(args, out)
    if args.command == "report":
        return _report(args, out)
    if not args.config:
        print(f"{args.command}: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.paths, args.out)
        start = time.perf_counter()
        report = run_experiment(cfg, args.workers, kind=args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    elapsed = time.perf_counter() - start
    _print_checks(report.name, report.checks, out)
    metrics = report.metrics
    for key in ("lambda_hat", "gk_lambda", "ratio", "time_rescaled_formula", "exit_frequency",
                "frequency_at_K", "p_value"):
        if key in metrics:
            print(f"{key} = {metrics[key]}", file=out)
    for group in ("primary", "second"):
        if group in metrics:
            m = metrics[group]
            print(f"{group}: lambda_hat = {m['lambda_hat']:.6f} +- {m['stderr']:.6f} "
                  f"({m['n_paths']} paths, u0 {m['u0']})", file=out)
    out_dir = cfg.output_dir or f"runs/{cfg.name}-{report.name}"
    paths = write_record(report.record, out_dir, args.format)
    print(f"wrote {', '.join(str(p) for p in paths.values())} in {elapsed:.1f} s", file=out)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
