"""``diffdomain`` command line: run, sweep, field, verify."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import __version__, kernels
from .config import OUTPUT_ENV, load_config, parse_epsilon, preset_names
from .errors import ConfigurationError, DiffDomainError, OutputError, SolverFailure

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3
EXIT_CHECK_FAILED = 4

log = logging.getLogger("diffdomain")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _epsilon(text: str) -> float:
    try:
        return parse_epsilon(text)
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _config(args):
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "output_dir", None):
        changes["output_dir"] = Path(args.output_dir)
    if getattr(args, "format", None) and args.command != "field":
        changes["output_format"] = args.format
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _rate(x: float) -> str:
    return "   -  " if math.isnan(x) else f"{x:6.3f}"


def cmd_run(args) -> int:
    from .experiment import run_single

    cfg = _config(args)
    outcome = run_single(cfg, args.epsilon)
    r = outcome.report
    print(f"{cfg.problem_id} on {cfg.domain_kind}, {cfg.nx}x{cfg.ny} grid, {cfg.steps} steps to T={cfg.T:g}")
    print(f"epsilon={r.epsilon:.6g}  l2_error={r.l2_error:.6e}  h1_error={r.h1_error:.6e}  "
          f"runtime={r.seconds:.1f}s  cg_iterations={r.iterations}")
    if cfg.output_format != "none":
        print(f"output: {cfg.output_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import run_sweep

    cfg = _config(args)
    csv_path = Path(args.csv) if args.csv else None
    result = run_sweep(cfg, csv_path)
    print(f"{cfg.problem_id} on {cfg.domain_kind}, {cfg.nx}x{cfg.ny} grid, {cfg.steps} steps to T={cfg.T:g}")
    print(f"{'epsilon':>10} {'L2 error':>12} {'rate':>6} {'H1 error':>12} {'rate':>6} {'seconds':>8}")
    l2r = [math.nan] + result.l2_rates
    h1r = [math.nan] + result.h1_rates
    for r, a, b in zip(result.reports, l2r, h1r):
        print(f"{r.epsilon:10.6g} {r.l2_error:12.4e} {_rate(a)} {r.h1_error:12.4e} {_rate(b)} {r.seconds:8.1f}")
    if cfg.output_format != "none":
        print(f"table: {csv_path or cfg.output_dir / 'sweep.csv'}")
    return EXIT_OK


def cmd_field(args) -> int:
    from .experiment import dump_field

    cfg = _config(args)
    eps = args.epsilon if args.epsilon is not None else cfg.epsilons[0]
    path = dump_field(cfg, eps, args.what, args.out, args.format)
    print(f"wrote {args.what} field to {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    names = args.check or list(verify.CHECKS)
    unknown = [n for n in names if n not in verify.CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown checks {unknown}; available: {', '.join(verify.CHECKS)}")
    failed = 0
    for name in names:
        res = verify.run_checks([name])[0]
        failed += not res.passed
        print(res.line(), flush=True)
    print(f"{len(names) - failed}/{len(names)} checks passed (kernel backend: {kernels.BACKEND})")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="diffdomain",
        description="Diffuse domain solver for the heat equation with Neumann data on curved 2-D domains.",
        epilog=f"Exit codes: 0 ok, 1 configuration, 2 solver failure, 3 I/O, 4 failed verify check. "
               f"{OUTPUT_ENV} overrides output.dir.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("config", help=f"TOML file or preset name ({', '.join(preset_names())})")
        p.add_argument("--output-dir", help="directory for results (beats config and environment)")
        p.add_argument("--workers", type=int, help="threads used by assembly")

    p = sub.add_parser("run", help="solve for one epsilon and report errors at T")
    common(p)
    p.add_argument("--epsilon", type=_epsilon, help="e.g. 1/16; default is the first in the config")
    p.add_argument("--format", choices=("csv", "vtk", "none"), help="override output.format")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="solve for every epsilon and tabulate errors and rates")
    common(p)
    p.add_argument("--csv", help="table path (default: <output dir>/sweep.csv)")
    p.add_argument("--format", choices=("csv", "vtk", "none"), help="override output.format")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("field", help="write a nodal field (omega, solution, exact, error) at T")
    common(p)
    p.add_argument("--epsilon", type=_epsilon)
    p.add_argument("--what", choices=("omega", "solution", "exact", "error"), default="solution")
    p.add_argument("--format", choices=("vtk", "csv"), help="file format (default from output.format)")
    p.add_argument("--out", help="file path (default: <output dir>/<what>_eps<e>.<format>)")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("verify", help="run the built-in oracle checks")
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command != "verify" and args.workers is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OutputError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DiffDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
