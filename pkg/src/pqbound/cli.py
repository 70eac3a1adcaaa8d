"""Command line entry point ``pqbound``.

Exit codes: 0 all verdicts pass, 1 a verdict fails (or the problem is not
covered), 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    ConvergenceError,
    InvalidCertificateError,
    NonFiniteError,
    PQBoundError,
    ThresholdError,
    UncoveredProblemError,
)
from .harness import RunReport, run_certify, run_checks, run_solve
from .scenarios import scenario_names

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (ConvergenceError, NonFiniteError, ThresholdError, InvalidCertificateError)

log = logging.getLogger("pqbound")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="problem JSON file or built-in scenario name")
    common.add_argument("--out-dir", default="out", help="directory for reports and traces (default: out)")
    common.add_argument("--seed", type=int, default=None, help="sampling seed override")
    common.add_argument("--samples", type=int, default=None, help="number of hypothesis samples")
    common.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=None,
                        help="interior nodes per direction")
    common.add_argument("--max-h", type=int, default=40, help="iteration steps in the level trace")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pqbound", description="Boundedness checks for p,q-growth Dirichlet problems.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="audit the structural hypotheses")
    sub.add_parser("solve", parents=[common], help="solve the discrete problem")
    sub.add_parser("certify", parents=[common], help="solve, audit and build a boundedness certificate")
    sub.add_parser("report", parents=[common], help="summarise a report written by an earlier run")
    sub.add_parser("list", help="list built-in scenarios")
    return p


def _report(args):
    if not args.config:
        raise ConfigError("report needs --config (scenario name or config file)")
    name = Path(args.config).stem if Path(args.config).is_file() else args.config
    path = Path(args.out_dir) / f"report_{name}.json"
    if not path.is_file():
        raise ConfigError(f"no report at {path}; run 'certify', 'solve' or 'check' first")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    rep = RunReport(scenario=data["scenario"], command=data["command"],
                    **{k: data.get(k) for k in ("classification", "solve", "audit", "certificate",
                                                "estimate", "pairings")},
                    verdicts=data.get("verdicts", {}), notes=data.get("notes", []))
    if args.format == "csv":
        out = rep.write(args.out_dir, "csv")
        print(f"wrote {out}")
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_FAIL


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        print("\n".join(scenario_names()))
        return EXIT_OK
    try:
        if args.command == "report":
            return _report(args)
        if not args.config:
            raise ConfigError("--config is required")
        if args.max_h < 1:
            raise ConfigError("--max-h must be positive")
        kw = dict(seed=args.seed, samples=args.samples, grid=args.grid)
        if args.command == "check":
            rep = run_checks(args.config, **kw)
        elif args.command == "solve":
            rep = run_solve(args.config, out_dir=args.out_dir, **kw)
        else:
            rep = run_certify(args.config, max_h=args.max_h, out_dir=args.out_dir, **kw)
        out = rep.write(args.out_dir, args.format)
        print(rep.summary())
        print(f"report: {out}")
        return EXIT_OK if rep.passed else EXIT_FAIL
    except ConfigError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UncoveredProblemError as exc:
        print(f"[{getattr(exc, 'stage', 'check')}] not covered: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except NUMERIC_ERRORS as exc:
        print(f"[{getattr(exc, 'stage', '?')}] numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PQBoundError as exc:
        print(f"[{getattr(exc, 'stage', '?')}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
