"""Command-line interface: ``wassproj <command> ...``.

Exit codes: 0 when the solver (or check) reports Optimal, 2 for bad input,
3 when the solver stops without certifying optimality, 4 for file errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .baselines import fit_grenander
from .cli_io import (
    InputError,
    digest_of,
    document_to_fit,
    fit_to_document,
    load_dataset,
    save_values,
    write_plot,
)
from .logconcave import fit_logconcave
from .measures import EmpiricalMeasure, sample
from .monotone import fit_monotone
from .qpsolver import SolverConfig, Status
from .transport import wp_distance
from .verify import consistency_experiment, first_order_residual, parse_truth, structural_checks

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_OPTIMAL = 3
EXIT_IO = 4

CHECK_TOL = 1e-7

logger = logging.getLogger("wassproj")


def _config(args) -> SolverConfig:
    kw = {}
    if getattr(args, "tol", None) is not None:
        kw["tol"] = kw["pg_tol"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        kw["max_iter"] = kw["pg_max_iter"] = args.max_iter
    return SolverConfig(**kw)


def _emit(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_json(obj, path) -> None:
    _emit(json.dumps(obj, indent=1, allow_nan=False) + "\n", path)


def _input_path(args):
    path = args.input if args.input is not None else args.data
    if path is None:
        raise InputError("no input: pass --input FILE")
    return path


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not JSON: {exc}") from exc


def _load_source(path):
    """A fit document, a truth spec (JSON) or a dataset, as a quantile."""
    if str(path).endswith(".json"):
        doc = _read_json(path)
        if isinstance(doc, dict) and "schema_version" in doc:
            return document_to_fit(doc).quantile()
        return parse_truth(doc).quantile()
    return load_dataset(path)


def _finish_fit(fit, m: EmpiricalMeasure, args, started: float) -> int:
    doc = fit_to_document(fit, digest_of(m))
    doc["report"]["seconds"] = time.perf_counter() - started
    _emit_json(doc, args.output)
    if args.emit_plot:
        if doc["density"] is None:
            logger.warning("point-mass fit has no density; no plot written")
        else:
            write_plot(fit.density(), args.emit_plot)
    return EXIT_OK if fit.report.status is Status.OPTIMAL else EXIT_NOT_OPTIMAL


def cmd_fit_monotone(args) -> int:
    m = load_dataset(_input_path(args))
    t0 = time.perf_counter()
    try:
        fit = fit_monotone(m, args.grid_size, _config(args))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return _finish_fit(fit, m, args, t0)


def cmd_fit_logconcave(args) -> int:
    m = load_dataset(_input_path(args))
    t0 = time.perf_counter()
    try:
        fit = fit_logconcave(m, args.grid_size, _config(args), nonneg_support=args.nonneg_support)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return _finish_fit(fit, m, args, t0)


def cmd_grenander(args) -> int:
    m = load_dataset(_input_path(args))
    t0 = time.perf_counter()
    try:
        fit = fit_grenander(m)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return _finish_fit(fit, m, args, t0)


def cmd_distance(args) -> int:
    if not args.p >= 1:
        raise InputError("--p must be at least 1")
    d = wp_distance(_load_source(args.a), _load_source(args.b), args.p)
    _emit(f"{d!r}\n", args.output)
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 1:
        raise InputError("--n must be positive")
    src = _load_source(args.model)
    seed = 0 if args.seed is None else args.seed
    _emit(save_values(sample(src, args.n, seed)), args.output)
    return EXIT_OK


def cmd_check(args) -> int:
    m = load_dataset(args.data)
    cfg = _config(args)
    tol = CHECK_TOL if args.tol is None else args.tol
    if args.model in ("monotone", "logconcave"):
        fit_fn = fit_monotone if args.model == "monotone" else fit_logconcave
        try:
            fit = fit_fn(m, args.grid_size, cfg)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        model = args.model
    else:
        fit = document_to_fit(_read_json(args.model))
        model = "monotone" if fit.model == "grenander" else fit.model
    data = fit.data if args.model in ("monotone", "logconcave") else m.quantile()
    residual = first_order_residual(fit, data, model)
    checks = structural_checks(fit)
    certified = residual >= -tol and all(checks.values())
    _emit_json(
        {
            "model": fit.model,
            "status": fit.report.status.value,
            "first_order_residual": residual,
            "tolerance": tol,
            "structure": checks,
            "certified": certified,
        },
        args.output,
    )
    return EXIT_OK if certified else EXIT_NOT_OPTIMAL


def cmd_simulate(args) -> int:
    cfg = _read_json(args.config)
    try:
        truth = parse_truth(cfg["truth"])
        report = consistency_experiment(
            truth,
            cfg["ns"],
            int(cfg.get("reps", 20)),
            cfg["model"],
            int(cfg.get("K", args.grid_size)),
            int(cfg.get("seed", 0 if args.seed is None else args.seed)),
            int(cfg.get("workers", 1)),
            _config(args),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad simulate config: {exc}") from exc
    _emit_json(report.as_dict(), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="write the result here instead of stdout")
    common.add_argument("--grid-size", type=int, default=200, metavar="K", help="uniform grid size (default 200)")
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--max-iter", type=int, help="solver iteration cap")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("-v", "--verbose", action="store_true")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("data", nargs="?", help="dataset (same as --input)")
    fitting.add_argument("--input", "-i", help="dataset: one value or value,weight per line")
    fitting.add_argument("--emit-plot", metavar="CSV", help="also write the density on a 512-point grid")

    p = argparse.ArgumentParser(prog="wassproj", description="Wasserstein projections onto shape-constrained laws.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit-monotone", parents=[common, fitting], help="project onto non-increasing densities")
    s.set_defaults(func=cmd_fit_monotone)
    s = sub.add_parser("fit-logconcave", parents=[common, fitting], help="project onto log-concave laws")
    s.add_argument("--nonneg-support", action="store_true", help="also require support in [0, inf)")
    s.set_defaults(func=cmd_fit_logconcave)
    s = sub.add_parser("grenander", parents=[common, fitting], help="Grenander estimate")
    s.set_defaults(func=cmd_grenander)

    s = sub.add_parser("distance", parents=[common], help="p-Wasserstein distance between two sources")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("a", help="dataset, fit document (.json) or truth spec (.json)")
    s.add_argument("b")
    s.set_defaults(func=cmd_distance)

    s = sub.add_parser("sample", parents=[common], help="draw values from a fit, truth spec or dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("model", help="fit document (.json), truth spec (.json) or dataset")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("check", parents=[common], help="first-order and structural certificate")
    s.add_argument("model", help="'monotone', 'logconcave' or a fit document")
    s.add_argument("data")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo consistency experiment")
    s.add_argument("config", help="JSON with truth, ns, reps, model, K, seed")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        # InputError and validation errors raised by the library
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
