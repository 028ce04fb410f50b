"""Command line: ``crwsim <command> [options]``.

Commands: estimate, verify-bounds, duality, nb-compare, oracle, martingale.
Options override a ``--config`` file of ``key=value`` lines (same names as
the long options, with ``-`` or ``_``). The CSV goes to ``--output`` (stdout
if absent) and the JSON summary to ``--summary``. The exit status is 0 iff
every check passed; configuration errors exit with status 2.

Worker threads: ``CRWSIM_WORKERS`` (default: available CPUs).
"""
import argparse
import sys

from .experiments import COMMANDS, METHODS, ExperimentConfig, run
from .graphs import ConfigurationError

_OPTIONS = [
    ("--graph", str, "graph spec, e.g. cycle:8, regtree:3, regtree:3:12, bintree:6, gw:geom:0.5"),
    ("--v", int, "target vertex (0 = root / origin)"),
    ("--method", str, f"one of {', '.join(METHODS)}"),
    ("--t", str, "time grid: linear:a:b:n, log:a:b:n or a comma list"),
    ("--reps", int, "Monte Carlo replicates"),
    ("--seed", int, "master seed"),
    ("--size-cap", int, "dual cluster size cap"),
    ("--radius", int, "window radius for direct simulation of an infinite graph"),
    ("--level", float, "confidence level of the Wilson intervals"),
    ("--tree-seed", int, "tree seed for a fixed (quenched) Galton-Watson tree"),
    ("--T", float, "horizon of the non-backtracking models"),
    ("--n-jumps", int, "jumps per replicate for martingale"),
    ("--thresholds", str, "comma list of running-max thresholds for martingale"),
    ("--sigma", str, "return-time windows t:u,t:u for verify-bounds"),
    ("--chain", str, "birth-death chain for oracle: branching:D or constant:a"),
    ("--output", str, "CSV output path (also -o)"),
    ("--summary", str, "JSON summary path"),
    ("--samples", str, "path prefix for X_T sample files"),
]
_FLAGS = [
    ("--fixed-tree", "use one tree (--tree-seed) for every replicate instead of resampling"),
    ("--planted", "hang the root from the absorbing vertex by a stem"),
]


def build_parser():
    parser = argparse.ArgumentParser(prog="crwsim", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file; options given here override it")
        p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
        for flag, kind, help_text in _OPTIONS:
            names = (flag, "-o") if flag == "--output" else (flag,)
            p.add_argument(*names, type=kind, default=argparse.SUPPRESS, help=help_text)
        for flag, help_text in _FLAGS:
            p.add_argument(flag, action="store_true", default=argparse.SUPPRESS, help=help_text)
    return parser


def resolve_config(args):
    base = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    values = base.as_dict()
    values["command"] = args.command
    for key, value in vars(args).items():
        if key in values and key != "command":
            values[key] = value
    return ExperimentConfig(**values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(cfg.to_text())
            return 0
        report = run(cfg)
    except ConfigurationError as exc:
        print(f"crwsim: configuration error: {exc}", file=sys.stderr)
        return 2
    report.write()
    if not cfg.output:
        sys.stdout.write(report.csv)
    failed = [c for c in report.checks if not c["pass"]]
    status = "PASS" if not failed else f"FAIL ({len(failed)} of {len(report.checks)} checks)"
    print(f"crwsim {cfg.command}: {status} in {report.elapsed:.2f}s", file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
