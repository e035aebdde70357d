"""Experiment configuration: parsing and validation of YAML/JSON config files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from .core import APSeries, Basis, TruncationPolicy, random_series
from .exceptions import ConfigError
from .nls import NonlinearitySpec, PicardConfig, SolverConfig, StepperConfig
from .validation import as_complex

SCHEMA_VERSION = 1
MODES = ("picard", "step", "classify", "scan", "check-basis")

_TOP_KEYS = {"schema_version", "mode", "seed", "basis", "initial_data", "nonlinearity",
             "solver", "scan", "check_basis", "output"}


@dataclass
class ScanSettings:
    lambdas: List[complex]
    means: List[complex]
    run: bool = False


@dataclass
class OutputSettings:
    dir: str = "out"
    trace: str = "trace.csv"
    summary: str = "summary.json"
    table: str = "scan.csv"


@dataclass
class ExperimentConfig:
    mode: str
    basis: Basis
    initial_data: APSeries
    nonlinearity: NonlinearitySpec
    solver: SolverConfig
    direction: int = 1
    seed: int = 0
    scan: Optional[ScanSettings] = None
    check_radius: int = 3
    output: OutputSettings = field(default_factory=OutputSettings)


def _section(raw, name, allowed):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return raw


def _build(name, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}': {exc}") from exc


def parse_config(raw: dict, seed: Optional[int] = None) -> ExperimentConfig:
    """Validate a config mapping; ``seed`` overrides the file's seed."""
    raw = _section(raw, "config", _TOP_KEYS)
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    mode = raw.get("mode", "step")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    seed = int(raw.get("seed", 0) if seed is None else seed)

    b = _section(raw.get("basis"), "basis", {"generators", "independence_tol", "independent"})
    if "generators" not in b:
        raise ConfigError("'basis.generators' is required")
    basis = _build("basis", lambda: Basis(tuple(b["generators"]),
                                          float(b.get("independence_tol", 1e-9)),
                                          bool(b.get("independent", True))))

    init = _section(raw.get("initial_data"), "initial_data", {"terms", "random"})
    if "terms" in init and "random" in init:
        raise ConfigError("'initial_data' takes either 'terms' or 'random', not both")
    if "random" in init:
        r = _section(init["random"], "initial_data.random", {"terms", "radius", "norm"})
        f = _build("initial_data.random", lambda: random_series(
            basis, int(r.get("terms", 3)), int(r.get("radius", 2)),
            np.random.default_rng(seed), r.get("norm")))
    else:
        f = _build("initial_data.terms", lambda: APSeries.from_literal(basis,
                                                                       init.get("terms", [])))

    nl = _section(raw.get("nonlinearity"), "nonlinearity", {"p", "k", "lambda", "modulus"})
    if "p" not in nl:
        raise ConfigError("'nonlinearity.p' is required")

    def make_spec():
        lam = as_complex(nl.get("lambda", 1.0), "lambda")
        modulus = bool(nl.get("modulus", False))
        p = nl["p"]
        k = nl.get("k", p // 2 if modulus else p)
        return NonlinearitySpec(p, k, lam, modulus)

    spec = _build("nonlinearity", make_spec)

    sv = _section(raw.get("solver"), "solver",
                  {"theta", "trunc", "picard", "stepper", "direction"})
    tr = _section(sv.get("trunc"), "solver.trunc", {"eps", "max_support", "radius"})
    pc = _section(sv.get("picard"), "solver.picard", {"max_iters", "tol", "grid"})
    st = _section(sv.get("stepper"), "solver.stepper",
                  {"dt", "max_steps", "blowup_norm_threshold", "t_end", "record_every",
                   "accuracy_fraction"})
    direction = sv.get("direction", "forward")
    if direction not in ("forward", "backward"):
        raise ConfigError(f"solver.direction must be 'forward' or 'backward', got {direction!r}")

    def opt_int(v):
        return None if v is None else int(v)

    solver = _build("solver", lambda: SolverConfig(
        trunc=TruncationPolicy(float(tr.get("eps", 1e-15)), opt_int(tr.get("max_support")),
                               opt_int(tr.get("radius"))),
        picard=PicardConfig(int(pc.get("max_iters", 60)), float(pc.get("tol", 1e-12)),
                            int(pc.get("grid", 128))),
        stepper=StepperConfig(
            float(st.get("dt", 1e-3)), int(st.get("max_steps", 1_000_000)),
            float(st.get("blowup_norm_threshold", 1e3)),
            None if st.get("t_end") is None else float(st["t_end"]),
            int(st.get("record_every", 1)), float(st.get("accuracy_fraction", 0.1))),
        theta=float(sv.get("theta", 0.9))))

    scan = None
    if raw.get("scan") is not None or mode == "scan":
        sc = _section(raw.get("scan"), "scan", {"lambdas", "means", "run"})
        if not sc.get("lambdas") or not sc.get("means"):
            raise ConfigError("'scan.lambdas' and 'scan.means' must be non-empty lists")
        scan = _build("scan", lambda: ScanSettings(
            [as_complex(v, "scan.lambdas") for v in sc["lambdas"]],
            [as_complex(v, "scan.means") for v in sc["means"]], bool(sc.get("run", False))))

    cb = _section(raw.get("check_basis"), "check_basis", {"radius"})
    check_radius = int(cb.get("radius", 3))
    if check_radius < 1:
        raise ConfigError("check_basis.radius must be >= 1")

    out = _section(raw.get("output"), "output", {"dir", "trace", "summary", "table"})
    output = OutputSettings(**{k: str(v) for k, v in out.items()})

    return ExperimentConfig(mode=mode, basis=basis, initial_data=f, nonlinearity=spec,
                            solver=solver, direction=1 if direction == "forward" else -1,
                            seed=seed, scan=scan, check_radius=check_radius, output=output)


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    return parse_config(raw, seed=seed)
