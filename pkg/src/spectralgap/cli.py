"""Command line interface.

Subcommands
-----------
``bounds CONFIG``   run a JSON run configuration
``example NAME``    run a built-in example with default settings and check it
``list``            list the built-in examples
``check``           run every built-in example and check all reference values

Exit codes: 0 success, 1 a FAIL verdict, 2 usage or configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .examples import REGISTRY, example_names
from .pipeline import (ConfigError, Report, RunConfig, add_checks, check_example, emit_outputs, example_config,
                       run_bounds)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spectralgap", description="Two-sided estimates of principal eigenvalues of 1-D diffusions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def outputs(sp):
        sp.add_argument("--report", help="write the JSON report here")
        sp.add_argument("--csv", help="write the result table as CSV here")
        sp.add_argument("--plot-dir", help="write plot data files into this directory")
        sp.add_argument("--timing", action="store_true", help="include wall times in the JSON and CSV outputs")
        sp.add_argument("--quiet", action="store_true", help="do not print the table")

    b = sub.add_parser("bounds", help="run a JSON configuration")
    b.add_argument("config", help="path to the configuration file, or - for standard input")
    outputs(b)

    e = sub.add_parser("example", help="run a built-in example")
    e.add_argument("name")
    e.add_argument("--n-grid", type=int, default=None)
    e.add_argument("--optimizer-tol", type=float, default=None)
    outputs(e)

    sub.add_parser("list", help="list built-in examples")

    c = sub.add_parser("check", help="check every built-in example against its reference values")
    c.add_argument("--only", nargs="*", help="restrict to these examples")
    c.add_argument("--report", help="write all reports as one JSON document here")
    return p


def _targets(args, cfg: Optional[RunConfig] = None) -> dict:
    t = dict(cfg.outputs) if cfg is not None else {}
    for key in ("report", "csv", "plot_dir"):
        val = getattr(args, key, None)
        if val:
            t[key] = val
    return t


def _finish(report: Report, args, targets: dict, ctx: dict) -> int:
    try:
        emit_outputs(report, targets, plot=ctx.get("plot"), problem=ctx.get("problem"), timing=args.timing,
                     stream=None if args.quiet else sys.stdout)
    except OSError as exc:
        print(f"spectralgap: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if report.errored:
        for r in report.rows:
            if r.error:
                print(f"spectralgap: {r.case} {r.method} failed in stage {r.stage}: {r.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_FAIL if report.failed else EXIT_OK


def _cmd_bounds(args) -> int:
    try:
        text = sys.stdin.read() if args.config == "-" else open(args.config, encoding="utf-8").read()
    except OSError as exc:
        print(f"spectralgap: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = RunConfig.from_json(text)
        cfg.outputs = _targets(args, cfg)
        ctx: dict = {}
        report = run_bounds(cfg, context=ctx)
    except ConfigError as exc:
        print(f"spectralgap: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return _finish(report, args, cfg.outputs, ctx)


def _cmd_example(args) -> int:
    if args.name not in REGISTRY:
        print(f"spectralgap: unknown example {args.name!r}; available: {', '.join(example_names())}",
              file=sys.stderr)
        return EXIT_USAGE
    overrides = {}
    if args.n_grid is not None:
        overrides["n_grid"] = args.n_grid
    if args.optimizer_tol is not None:
        overrides["optimizer_tol"] = args.optimizer_tol
    try:
        cfg = example_config(args.name, **overrides)
        cfg.outputs = _targets(args)
        ctx: dict = {}
        report = run_bounds(cfg, context=ctx)
    except ConfigError as exc:
        print(f"spectralgap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    add_checks(report, args.name)
    return _finish(report, args, cfg.outputs, ctx)


def _cmd_list(args) -> int:
    width = max(len(n) for n in REGISTRY)
    for name, ex in REGISTRY.items():
        print(f"{name.ljust(width)}  {'/'.join(ex.cases):8s}  {ex.description}")
    return EXIT_OK


def _cmd_check(args) -> int:
    names = args.only or example_names()
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        print(f"spectralgap: unknown example(s): {', '.join(unknown)}", file=sys.stderr)
        return EXIT_USAGE
    status = EXIT_OK
    reports = {}
    for name in names:
        report = check_example(name)
        reports[name] = report.to_dict()
        for c in report.checks:
            print(f"{c['verdict']}  {name:18s} {c['case']} {c['quantity']:16s} got {_num(c['got'])} "
                  f"expected {_num(c['expected'])} tol {_num(c['tolerance'])}")
        for v in report.verdicts:
            print(f"{v['verdict']}  {name:18s} {v['case']} sandwich {v['method']}")
        if report.errored:
            for r in report.rows:
                if r.error:
                    print(f"ERROR {name:18s} {r.case} {r.method}: {r.error}")
            status = max(status, EXIT_NUMERIC)
        elif report.failed:
            status = max(status, EXIT_FAIL)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(reports, fh, indent=2, sort_keys=True)
    return status


def _num(v) -> str:
    return "-" if v is None else f"{v:.6g}"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"bounds": _cmd_bounds, "example": _cmd_example, "list": _cmd_list, "check": _cmd_check}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
