"""Command-line entry point: ``tfim-ent {sweep,fss,verify,export} --config PATH``.

Exit codes
----------
0  success
1  verify: at least one check failed
2  configuration or usage error (bad config, missing runs, caps exceeded)
3  resource gate: the system does not fit in the memory budget
4  solver failure during a sweep
5  finite-size-scaling analysis error

Failures print one JSON object to stderr; logs are JSON lines on stderr and
summary tables go to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, int_list, load_config, optional_number, path_list
from .eigensolver import DENSE_MAX_SITES
from .export import ExportError, export_figures
from .fss import FSSError, InterpolationError, run_fss
from .ioutil import write_json
from .lattice import LatticeError
from .sweep import ResourceError, SweepFailure, execute_plan
from .verify import run_checks

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_SOLVER, EXIT_FSS = 0, 1, 2, 3, 4, 5


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra}, sort_keys=True),
          file=sys.stderr)
    return code


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.cache_dir, args.workers)
    plan = cfg.sweep_plan()
    try:
        result = execute_plan(plan, cfg.config_hash)
    except ResourceError as exc:
        return _fail(EXIT_RESOURCE, "resource", str(exc))
    except SweepFailure as exc:
        return _fail(EXIT_SOLVER, "solver", str(exc), completed=len(exc.partial))
    print(f"lattice {plan.lattice.sizes_str}  N={plan.lattice.n_sites}  points={len(result.records)}  "
          f"solved={result.n_solved}  cached={result.n_cached}")
    if result.peak is not None:
        print(f"lambda_m = {result.peak.lambda_m:.6f}  peak dE_gl/dlambda = {result.peak.peak_value:.6f}")
    elif result.peak_error:
        print(f"no peak: {result.peak_error}")
    return EXIT_OK


def cmd_fss(args) -> int:
    cfg = load_config(args.config, args.cache_dir, args.workers)
    section = cfg.section("fss")
    runs = path_list(cfg, section, "runs", "fss")
    if len(runs) < 3:
        raise ConfigError("fss.runs", f"need at least 3 completed runs, got {len(runs)}")
    missing = [str(r) for r in runs if not (r / "peak.json").exists()]
    if missing:
        raise ConfigError("fss.runs", f"missing run output in {missing[0]}")
    if cfg.output_dir is None:
        raise ConfigError("output_dir", "required")
    centering = section.get("centering", "lambda_m")
    if centering not in ("lambda_m", "lambda_c"):
        raise ConfigError("fss.centering", "must be lambda_m or lambda_c")
    try:
        report = run_fss(
            runs, cfg.output_dir, cfg.config_hash,
            lambda_exclude=int_list(section, "lambda_exclude_sizes", "fss"),
            nu_exclude=int_list(section, "nu_exclude_sizes", "fss"),
            window=optional_number(section, "window", "fss"),
            centering=centering,
        )
    except (FSSError, InterpolationError) as exc:
        return _fail(EXIT_FSS, "fss", str(exc))
    fit = report.fit
    print(f"{'quantity':<12}{'value':>12}")
    print(f"{'lambda_c':<12}{fit.lambda_c:>12.3f}")
    print(f"{'alpha':<12}{fit.alpha:>12.3f}")
    if report.collapse is not None:
        print(f"{'nu':<12}{report.collapse.nu:>12.3f}")
    if report.divergence is not None:
        print(f"{'ln-slope':<12}{report.divergence.slope:>12.3f}")
        print(f"{'ln-r2':<12}{report.divergence.r_squared:>12.4f}")
    print(f"approach {fit.side}; sizes {fit.sizes_used}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config, args.cache_dir, args.workers)
    section = cfg.raw.get("verify", {})
    max_n = section.get("max_n", 10)
    tol = section.get("tolerance", 1e-10)
    if not isinstance(max_n, int) or max_n < 2:
        raise ConfigError("verify.max_n", "must be an integer >= 2")
    if max_n > DENSE_MAX_SITES:
        raise ConfigError("verify.max_n", f"dense oracle cap is {DENSE_MAX_SITES} sites")
    if not isinstance(tol, (int, float)) or tol <= 0:
        raise ConfigError("verify.tolerance", "must be a positive number")
    results = run_checks(max_n, float(tol))
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    if cfg.output_dir is not None:
        write_json(cfg.output_dir / "verify.json",
                   {"checks": [r.__dict__ for r in results]}, cfg.config_hash)
    failed = [r.name for r in results if not r.passed]
    if failed:
        return _fail(EXIT_CHECK, "check_failed", f"failed: {', '.join(failed)}", checks=failed)
    return EXIT_OK


def cmd_export(args) -> int:
    cfg = load_config(args.config, args.cache_dir, args.workers)
    section = cfg.section("export")
    runs = path_list(cfg, section, "runs", "export", required=False)
    fss_dirs = path_list(cfg, section, "fss_dirs", "export", required=False)
    fig8 = path_list(cfg, section, "fig8_runs", "export", required=False) if "fig8_runs" in section else None
    if cfg.output_dir is None:
        raise ConfigError("output_dir", "required")
    try:
        written = export_figures(runs, fss_dirs, fig8, cfg.output_dir, cfg.config_hash)
    except (ExportError, FileNotFoundError) as exc:
        return _fail(EXIT_CONFIG, "export", str(exc))
    except FSSError as exc:
        return _fail(EXIT_FSS, "fss", str(exc))
    for path in written:
        print(path)
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "fss": cmd_fss, "verify": cmd_verify, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfim-ent", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug-level logs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--workers", type=int, default=None, help="override config workers")
        p.add_argument("--cache-dir", default=None, help="override cache directory")
    return parser


def _configure_logging(verbose: bool) -> None:
    logger = logging.getLogger("tfim_entanglement")
    for h in [h for h in logger.handlers if getattr(h, "_tfim_cli", False)]:
        logger.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    handler._tfim_cli = True
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, LatticeError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), field=getattr(exc, "field", None))
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))


if __name__ == "__main__":
    sys.exit(main())
