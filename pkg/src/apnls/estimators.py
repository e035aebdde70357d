"""scikit-learn style front ends for the solvers and the blow-up sign test.

The estimators follow the usual conventions: hyperparameters are stored
verbatim in ``__init__``, ``fit`` returns ``self`` and fitted state ends in an
underscore, so ``get_params``/``set_params``/``clone`` work unchanged.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .core import TruncationPolicy, evaluate
from .exceptions import DomainError
from .nls import (
    BlowupClass,
    NonlinearitySpec,
    PicardConfig,
    SolverConfig,
    StepperConfig,
    certified_window,
    classify_sign,
    picard_solve,
    solve_backward,
    step_solve,
)
from .validation import as_complex, check_coupling_mean_pairs, check_series, check_time


class _SolverMixin:
    def _spec(self):
        lam = as_complex(self.lam, "lam")
        if self.modulus:
            return NonlinearitySpec.power(self.p, lam)
        k = self.p if self.k is None else self.k
        return NonlinearitySpec(self.p, k, lam)

    def _trunc(self):
        return TruncationPolicy(self.eps, self.max_support, self.radius)

    def _snapshot(self, t):
        check_is_fitted(self, "trace_")
        if t is None:
            return self.trace_.final
        t = check_time(t)
        hit = np.flatnonzero(np.isclose(self.trace_.times, abs(t), rtol=0, atol=1e-12))
        if len(hit) == 0:
            raise DomainError(f"time {t} is not a recorded time of the fitted trace")
        return self.trace_.snapshots[hit[0]]

    def predict(self, x, t=None):
        """Values ``u(t, x)``; ``t`` defaults to the last recorded time."""
        return evaluate(self._snapshot(t), np.asarray(x, dtype=float))

    def transform(self, times):
        """Coefficient snapshots at recorded times."""
        return [self._snapshot(t) for t in np.atleast_1d(times)]


class PicardSolver(_SolverMixin, BaseEstimator):
    """Local solution by contraction on the certified window.

    Parameters
    ----------
    p, k : int
        Nonlinearity ``u^k conj(u)^(p-k)``; ``k`` defaults to ``p``.
    lam : complex or [re, im]
    modulus : bool
        Use ``lam |u|^p`` (even ``p``).
    theta : float
        Fraction of the certified window to solve on.
    grid, tol, max_iters
        Time grid intervals, l1 stopping tolerance and iteration cap.
    eps, max_support, radius
        Truncation policy for products.
    """

    def __init__(self, p=2, k=None, lam=1.0, modulus=False, theta=0.9, grid=128, tol=1e-12,
                 max_iters=60, eps=1e-15, max_support=None, radius=None):
        self.p = p
        self.k = k
        self.lam = lam
        self.modulus = modulus
        self.theta = theta
        self.grid = grid
        self.tol = tol
        self.max_iters = max_iters
        self.eps = eps
        self.max_support = max_support
        self.radius = radius

    def fit(self, f, y=None):
        f = check_series(f)
        spec = self._spec()
        cfg = SolverConfig(trunc=self._trunc(), theta=self.theta,
                           picard=PicardConfig(self.max_iters, self.tol, self.grid))
        self.trace_, self.diagnostics_ = picard_solve(f, spec, cfg)
        self.window_ = self.diagnostics_.window
        self.n_iter_ = self.diagnostics_.iterations
        return self


class StepSolver(_SolverMixin, BaseEstimator):
    """Continuation with the rotating-frame RK4 stepper until a halting rule fires.

    ``direction=-1`` integrates towards negative times.
    """

    def __init__(self, p=2, k=None, lam=1.0, modulus=False, dt=1e-3, t_end=None,
                 blowup_norm_threshold=1e3, max_steps=1_000_000, record_every=1,
                 accuracy_fraction=0.1, eps=1e-15, max_support=None, radius=None,
                 direction=1):
        self.p = p
        self.k = k
        self.lam = lam
        self.modulus = modulus
        self.dt = dt
        self.t_end = t_end
        self.blowup_norm_threshold = blowup_norm_threshold
        self.max_steps = max_steps
        self.record_every = record_every
        self.accuracy_fraction = accuracy_fraction
        self.eps = eps
        self.max_support = max_support
        self.radius = radius
        self.direction = direction

    def fit(self, f, y=None):
        f = check_series(f)
        if self.direction not in (1, -1):
            raise ValueError("direction must be 1 or -1")
        spec = self._spec()
        cfg = SolverConfig(
            trunc=self._trunc(),
            stepper=StepperConfig(self.dt, self.max_steps, self.blowup_norm_threshold,
                                  self.t_end, self.record_every, self.accuracy_fraction))
        solve = step_solve if self.direction == 1 else solve_backward
        self.trace_ = solve(f, spec, cfg)
        self.window_ = certified_window(f, spec)
        self.halt_reason_ = self.trace_.halt_reason
        self.halt_time_ = self.direction * self.trace_.halt_time
        return self


class BlowupSignClassifier(ClassifierMixin, BaseEstimator):
    """Sign test on (coupling, mean value) pairs.

    ``X`` is complex with columns ``(lam, M(f))`` or real with columns
    ``(Re lam, Im lam, Re M(f), Im M(f))``. There is nothing to learn; ``fit``
    only validates input and records the label set.
    """

    def fit(self, X, y=None):
        check_coupling_mean_pairs(X)
        self.classes_ = np.array([c.value for c in BlowupClass])
        return self

    def predict(self, X):
        check_is_fitted(self, "classes_")
        pairs = check_coupling_mean_pairs(X)
        return np.array([classify_sign(lam, m).value for lam, m in pairs])
