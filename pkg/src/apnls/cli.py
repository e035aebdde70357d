"""Command line runner.

Verbs: ``run`` (mode taken from the config), ``scan``, ``classify`` and
``check-basis``. Every flag can also be set through an ``APNLS_*`` environment
variable (``APNLS_CONFIG``, ``APNLS_OUT``, ``APNLS_SEED``, ``APNLS_THREADS``);
flags win over the environment.

Exit codes: 0 success, 1 configuration error, 2 accuracy abort, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config
from .core import APSeries, add, collision_scan, mean_value, scale
from .exceptions import APError, ConfigError
from .nls import (
    certified_window,
    classify_blowup,
    classify_sign,
    picard_solve,
    riccati_bound,
    solve_backward,
    step_solve,
    zero_mode_residual,
)

log = logging.getLogger("apnls")

ENV_PREFIX = "APNLS_"
EXIT_OK, EXIT_CONFIG, EXIT_ACCURACY, EXIT_SOLVER = 0, 1, 2, 3
SCAN_COLUMNS = ("lambda_re", "lambda_im", "mean_re", "mean_im", "classification",
                "halt_reason", "halt_time", "error")


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, complex):
        return [_jsonable(value.real), _jsonable(value.imag)]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _classification(cfg: ExperimentConfig) -> dict:
    spec, f = cfg.nonlinearity, cfg.initial_data
    return {
        "classification": classify_blowup(spec.lam, f).value,
        "mean_value": mean_value(f),
        "lambda": spec.lam,
        "sign_test_applies": spec.modulus,
        "riccati_bound": riccati_bound(f, spec.lam, spec.p) if spec.modulus else None,
    }


def _run_picard(cfg, out: Path) -> int:
    trace, diag = picard_solve(cfg.initial_data, cfg.nonlinearity, cfg.solver)
    trace.to_csv(out / cfg.output.trace)
    summary = {
        "mode": "picard",
        "halt_reason": trace.halt_reason,
        "certified_window": diag.window,
        "iterations": diag.iterations,
        "contraction_ratios": diag.ratios,
        "max_iterate_norm": diag.max_norm,
        "ball_radius": diag.ball_radius,
        "discarded_mass": diag.discarded_mass,
        "zero_mode_residual": zero_mode_residual(trace, cfg.nonlinearity),
        **_classification(cfg),
    }
    _write_json(out / cfg.output.summary, summary)
    return EXIT_OK


def _run_step(cfg, out: Path) -> int:
    solve = step_solve if cfg.direction == 1 else solve_backward
    trace = solve(cfg.initial_data, cfg.nonlinearity, cfg.solver)
    trace.to_csv(out / cfg.output.trace)
    summary = {
        "mode": "step",
        "direction": "forward" if cfg.direction == 1 else "backward",
        "halt_reason": trace.halt_reason,
        "halt_time": cfg.direction * trace.halt_time,
        "steps": trace.meta.get("steps"),
        "final_a_norm": float(trace.a_norm[-1]),
        "discarded_mass": float(trace.discarded_mass[-1]),
        "certified_window": certified_window(cfg.initial_data, cfg.nonlinearity),
        "zero_mode_residual": zero_mode_residual(trace, cfg.nonlinearity),
        **_classification(cfg),
    }
    _write_json(out / cfg.output.summary, summary)
    return EXIT_ACCURACY if trace.halt_reason == "accuracy_abort" else EXIT_OK


def _run_classify(cfg, out: Path) -> int:
    _write_json(out / cfg.output.summary, {"mode": "classify", **_classification(cfg)})
    return EXIT_OK


def _run_check_basis(cfg, out: Path) -> int:
    pairs = collision_scan(cfg.basis, cfg.check_radius)
    _write_json(out / cfg.output.summary, {
        "mode": "check-basis",
        "generators": list(cfg.basis.generators),
        "radius": cfg.check_radius,
        "tolerance": cfg.basis.independence_tol,
        "collisions": [[list(a), list(b)] for a, b in pairs],
        "independent_in_box": not pairs,
    })
    return EXIT_OK


def _scan_cell(cfg: ExperimentConfig, oscillation: APSeries, i: int, j: int, out: Path) -> dict:
    lam, m = cfg.scan.lambdas[i], cfg.scan.means[j]
    row = {"lambda_re": lam.real, "lambda_im": lam.imag, "mean_re": m.real, "mean_im": m.imag,
           "classification": classify_sign(lam, m).value, "halt_reason": "",
           "halt_time": "", "error": ""}
    if cfg.scan.run:
        try:
            f = add(oscillation, APSeries.constant(cfg.basis, m))
            spec = replace(cfg.nonlinearity, lam=lam)
            trace = step_solve(f, spec, cfg.solver)
            row["halt_reason"] = trace.halt_reason
            row["halt_time"] = trace.halt_time
        except (APError, ValueError, ArithmeticError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
    _write_json(out / "cells" / f"cell_{i:03d}_{j:03d}.json", row)
    return row


def _run_scan(cfg, out: Path, threads: int) -> int:
    f = cfg.initial_data
    oscillation = add(f, scale(APSeries.constant(cfg.basis, mean_value(f)), -1.0))
    cells = [(i, j) for i in range(len(cfg.scan.lambdas)) for j in range(len(cfg.scan.means))]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda ij: _scan_cell(cfg, oscillation, *ij, out), cells))
    lines = [",".join(SCAN_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in (row[c] for c in SCAN_COLUMNS)))
    _atomic_write(out / cfg.output.table, "\n".join(lines) + "\n")
    summary = {"mode": "scan", "cells": len(rows),
               "errors": sum(1 for r in rows if r["error"]),
               "table": cfg.output.table}
    _write_json(out / cfg.output.summary, summary)
    return EXIT_OK


def run(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> int:
    """Execute the configured mode and write its artifacts; return the exit code."""
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "picard":
        return _run_picard(cfg, out)
    if cfg.mode == "step":
        return _run_step(cfg, out)
    if cfg.mode == "classify":
        return _run_classify(cfg, out)
    if cfg.mode == "scan":
        return _run_scan(cfg, out, threads)
    return _run_check_basis(cfg, out)


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apnls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("run", "run the mode named in the config"),
                        ("scan", "classify (and optionally run) a coupling/mean grid"),
                        ("classify", "apply the blow-up sign test to the initial data"),
                        ("check-basis", "scan the basis for frequency collisions")):
        p = sub.add_parser(verb, help=help_)
        p.add_argument("--config", default=_env("CONFIG"), help="config file (YAML or JSON)")
        p.add_argument("--out", default=_env("OUT"), help="output directory")
        p.add_argument("--seed", type=int, default=_env("SEED"), help="seed for random data")
        p.add_argument("--threads", type=int, default=int(_env("THREADS", 1)),
                       help="worker threads for scans; never changes results")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.config:
        print("error: --config (or APNLS_CONFIG) is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        seed = None if args.seed is None else int(args.seed)
        cfg = load_config(args.config, seed=seed)
        if args.verb != "run":
            cfg.mode = args.verb
            if cfg.mode == "scan" and cfg.scan is None:
                raise ConfigError("scan needs a 'scan' section with lambdas and means")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = run(cfg, args.out, args.threads)
    except APError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    log.info("finished with exit code %d", code)
    return code


if __name__ == "__main__":
    sys.exit(main())
