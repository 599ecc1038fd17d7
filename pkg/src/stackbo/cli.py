"""Command-line entry point: ``stackbo run | bench-check | selftest``."""

import argparse
import logging
import sys

from stackbo import __version__
from stackbo._backend import BACKEND

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _parse_seeds(text):
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def build_parser():
    parser = argparse.ArgumentParser(prog="stackbo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment over one or more seeds")
    run.add_argument("config", help="key = value configuration file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seeds", type=_parse_seeds, help="comma-separated seeds (overrides the config)")
    run.add_argument("--workers", type=int, help="worker processes (default: $STACKBO_WORKERS or 1)")

    sub.add_parser("bench-check", help="evaluate the benchmark functions at their known optima")
    sub.add_parser("selftest", help="run the built-in property checks")
    return parser


def _cmd_run(args):
    from stackbo.harness import ConfigError, parse_config, run_experiment

    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest, traces = run_experiment(cfg, args.out, seeds=args.seeds, workers=args.workers)
    except (OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for tr in traces:
        last = tr.records[-1] if tr.records else None
        status = "ok" if tr.completed else f"FAILED ({tr.error})"
        if last is None:
            print(f"seed {tr.config.seed}: no BO iterations, {status}")
        else:
            print(f"seed {tr.config.seed}: {len(tr.records)} queries, cost {last.cum_cost:g}, "
                  f"SR {last.simple_regret:.4g}, IR {last.inference_regret:.4g}, {status}")
    print(f"wrote {len(manifest.artifacts)} artifacts to {manifest.output_dir}")
    return manifest.exit_code


def _cmd_bench_check(args):
    from stackbo.selftest import benchmark_optima_table

    ok = True
    print(f"{'task':<8} {'point':<32} {'value':>14} {'expected':>10} {'tol':>8}  status")
    for name, pt, val, expected, tol, passed in benchmark_optima_table():
        ok &= passed
        pt_text = "(" + ", ".join(f"{v:g}" for v in pt) + ")"
        print(f"{name:<8} {pt_text:<32} {val:>14.8g} {expected:>10g} {tol:>8.0e}  {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_selftest(args):
    from stackbo.selftest import run_selftest

    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; report those as configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "bench-check": _cmd_bench_check, "selftest": _cmd_selftest}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
