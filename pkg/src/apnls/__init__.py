"""Sparse spectral toolkit for almost periodic solutions of nonlinear Schrödinger equations."""

from .core import (
    NAMED_CONSTANTS,
    NO_TRUNCATION,
    APSeries,
    Basis,
    TruncationPolicy,
    a_norm,
    add,
    collision_scan,
    conjugate,
    evaluate,
    frequency_of,
    l2_norm,
    mean_value,
    multiply,
    project,
    random_series,
    scale,
    sobolev_norm,
)
from .exceptions import (
    APError,
    BasisMismatchError,
    CapacityError,
    ConfigError,
    ContractionError,
    DimensionError,
    DomainError,
    SupportClosureError,
)
from .nls import (
    BlowupClass,
    NonlinearitySpec,
    PicardConfig,
    SolutionTrace,
    SolverConfig,
    StepperConfig,
    certified_window,
    classify_blowup,
    classify_sign,
    nonlinearity,
    picard_solve,
    riccati_bound,
    solve_backward,
    step_solve,
    zero_mode_residual,
)
from .schrodinger import PhaseTable, duhamel, propagate

__version__ = "0.1.0"
