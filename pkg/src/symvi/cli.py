"""Command-line entry point: ``symvi run | list-experiments | check``."""

import argparse
import json
import sys

from . import harness

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_NUMERICAL = 3


def _run(args):
    try:
        cfg = harness.ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except (OSError, harness.InvalidConfig) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    out = args.out or cfg.output or "results"
    try:
        result = harness.run(cfg)
    except harness.InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except harness.ExperimentFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    paths = harness.emit(result, out, args.format)
    summary = harness._clean(result.summary)
    print(json.dumps(summary, indent=2))
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def _list(args):
    for name in harness.EXPERIMENTS:
        print(name)
    return EXIT_OK


def _check(args):
    failed = 0
    for name, ok, detail in harness.run_checks():
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
        failed += not ok
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def build_parser():
    parser = argparse.ArgumentParser(prog="symvi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="path to an experiment JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--format", choices=harness.FORMATS, default="csv",
                       help="json: result.json and trace.jsonl; csv: also errors.csv and curve.csv")
    p_run.set_defaults(func=_run)
    sub.add_parser("list-experiments", help="print the experiment kinds").set_defaults(func=_list)
    sub.add_parser("check", help="run the quick numerical invariant suite").set_defaults(func=_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
