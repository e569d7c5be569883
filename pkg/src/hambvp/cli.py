"""Command-line entry point: ``hambvp run <experiment> [variant] ...`` and ``hambvp list``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, build_config, load_file
from .experiments import NumericalFailure, registry_text, run_experiment

log = logging.getLogger("hambvp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; ours is 1
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hambvp", description="Hamiltonian boundary value problems: "
                "shooting, continuation and singularity experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("list", help="list systems, methods, experiments and warps")
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("experiment")
    r.add_argument("variant", nargs="?")
    r.add_argument("--method")
    r.add_argument("--steps", help="comma-separated step counts")
    r.add_argument("--mesh", choices=("uniform", "warped", "adaptive"))
    r.add_argument("--warp")
    r.add_argument("--param-range", help="a:b[:step]")
    r.add_argument("--functional")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--grid", type=int)
    r.add_argument("--tolerances", help="name=value[,name=value...]")
    r.add_argument("--out", help="output directory (default: $HAMBVP_OUT or ./hambvp-out)")
    r.add_argument("--format", dest="formats", help="comma-separated: csv,json,svg,gnuplot")
    r.add_argument("--jobs", type=int)
    r.add_argument("--config", help="key = value configuration file")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        sys.stdout.write(registry_text())
        return EXIT_OK
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        file_values = load_file(args.config) if args.config else {}
        cfg = build_config(file_values, experiment=args.experiment, variant=args.variant,
                           method=args.method, steps=args.steps, mesh=args.mesh, warp=args.warp,
                           param_range=args.param_range, functional=args.functional,
                           epsilon=args.epsilon, grid=args.grid, tolerances=args.tolerances,
                           out=args.out, formats=args.formats, jobs=args.jobs)
        log.info("running %s", cfg.experiment)
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"hambvp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"hambvp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"hambvp: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in report.files:
        print(f)
    print(f"done in {report.wall_clock:.1f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
