"""Nonlinear Schrödinger solvers on the sparse series representation.

The equation is ``i u_t + u_xx = lam * u^k conj(u)^(p-k)``; in coefficient form
``d/dt u_n = -i (omega . n)^2 u_n - i N(u)_n``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (
    NO_TRUNCATION,
    APSeries,
    TruncationPolicy,
    _plan_for,
    _truncate,
    _union,
    a_norm,
    add,
    conjugate,
    l2_norm,
    mean_value,
    multiply,
    project,
    scale,
)
from .exceptions import ContractionError
from .schrodinger import duhamel_block, phase_table, propagate

__all__ = [
    "NonlinearitySpec",
    "PicardConfig",
    "StepperConfig",
    "SolverConfig",
    "SolutionTrace",
    "PicardDiagnostics",
    "BlowupClass",
    "nonlinearity",
    "certified_window",
    "picard_solve",
    "step_solve",
    "solve_backward",
    "classify_blowup",
    "classify_sign",
    "zero_mode_residual",
    "riccati_bound",
    "mean_power_series",
]


@dataclass(frozen=True)
class NonlinearitySpec:
    """``N(u) = lam * u^k * conj(u)^(p - k)``.

    With ``modulus=True`` this is ``lam * |u|^p``, which needs an even ``p``
    and ``k = p / 2``.
    """

    p: int
    k: int
    lam: complex = 1.0
    modulus: bool = False

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if int(self.k) != self.k or not 0 <= self.k <= self.p:
            raise ValueError(f"k must satisfy 0 <= k <= p, got k={self.k}, p={self.p}")
        if self.modulus and (self.p % 2 or self.k * 2 != self.p):
            raise ValueError(f"modulus nonlinearity needs even p and k = p/2, got p={self.p}, "
                             f"k={self.k}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "lam", complex(self.lam))

    @classmethod
    def power(cls, p: int, lam=1.0) -> "NonlinearitySpec":
        """``lam * |u|^p`` for even ``p``."""
        return cls(p, p // 2, lam, modulus=True)

    def reversed_time(self) -> "NonlinearitySpec":
        """Nonlinearity seen by ``v(t) = conj(u(-t))``."""
        return NonlinearitySpec(self.p, self.k, self.lam.conjugate(), self.modulus)


@dataclass(frozen=True)
class PicardConfig:
    max_iters: int = 60
    tol: float = 1e-12
    grid: int = 128


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    max_steps: int = 1_000_000
    blowup_norm_threshold: float = 1e3
    t_end: Optional[float] = None
    record_every: int = 1
    accuracy_fraction: float = 0.1


@dataclass(frozen=True)
class SolverConfig:
    trunc: TruncationPolicy = TruncationPolicy(eps=1e-15)
    picard: PicardConfig = PicardConfig()
    stepper: StepperConfig = StepperConfig()
    theta: float = 0.9

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.picard.tol <= 0 or self.picard.max_iters < 1 or self.picard.grid < 1:
            raise ValueError("picard settings need tol > 0, max_iters >= 1, grid >= 1")
        st = self.stepper
        if st.dt <= 0 or st.max_steps < 1 or st.blowup_norm_threshold <= 0:
            raise ValueError("stepper settings need dt > 0, max_steps >= 1, threshold > 0")
        if st.record_every < 1 or st.accuracy_fraction <= 0:
            raise ValueError("record_every must be >= 1 and accuracy_fraction > 0")
        if st.t_end is not None and st.t_end <= 0:
            raise ValueError("t_end must be positive")


TRACE_COLUMNS = ("t", "a_norm", "l2_norm", "re_zero_mode", "im_zero_mode", "discarded_mass")


@dataclass
class SolutionTrace:
    """Time-stamped snapshots and scalar diagnostics of a run.

    ``times`` are elapsed times; for a backward run (``direction == -1``) row
    ``j`` holds the solution at ``-times[j]``.
    """

    times: np.ndarray
    snapshots: List[Optional[APSeries]]
    a_norm: np.ndarray
    l2_norm: np.ndarray
    zero_mode: np.ndarray
    discarded_mass: np.ndarray
    picard_iters: np.ndarray
    halt_reason: Optional[str] = None
    direction: int = 1
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_snapshots(cls, times, snapshots, discarded, picard_iters=None, **kw):
        n = len(snapshots)
        return cls(
            times=np.asarray(times, dtype=float),
            snapshots=list(snapshots),
            a_norm=np.array([a_norm(s) for s in snapshots], dtype=float),
            l2_norm=np.array([l2_norm(s) for s in snapshots], dtype=float),
            zero_mode=np.array([mean_value(s) for s in snapshots], dtype=complex),
            discarded_mass=np.asarray(discarded, dtype=float),
            picard_iters=(np.zeros(n, dtype=int) if picard_iters is None
                          else np.asarray(picard_iters, dtype=int)),
            **kw,
        )

    def __len__(self):
        return len(self.times)

    @property
    def halt_time(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> Optional[APSeries]:
        return self.snapshots[-1] if self.snapshots else None

    def rows(self):
        for t, a, l2, z, d in zip(self.times, self.a_norm, self.l2_norm, self.zero_mode,
                                  self.discarded_mass):
            yield (float(t), float(a), float(l2), float(z.real), float(z.imag), float(d))

    def to_csv(self, path) -> None:
        """Write the scalar columns; ``repr`` keeps every float round-trippable."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([repr(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "SolutionTrace":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = tuple(next(r))
            if header != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace header {header}")
            data = np.array([[float(v) for v in row] for row in r], dtype=float).reshape(-1, 6)
        return cls(times=data[:, 0], snapshots=[None] * len(data), a_norm=data[:, 1],
                   l2_norm=data[:, 2], zero_mode=data[:, 3] + 1j * data[:, 4],
                   discarded_mass=data[:, 5], picard_iters=np.zeros(len(data), dtype=int))


def nonlinearity(u: APSeries, spec: NonlinearitySpec,
                 trunc: TruncationPolicy = NO_TRUNCATION):
    """``lam * u^k conj(u)^(p-k)`` by repeated truncated products.

    Returns
    -------
    value : APSeries
    discarded_mass : float
        l1 bound on everything dropped, with earlier losses carried through
        later factors by the factor's norm.
    """
    if spec.lam == 0 or u.support_size == 0:
        return APSeries(u.basis), 0.0
    ubar = conjugate(u) if spec.k < spec.p else None
    factors = [u] * spec.k + [ubar] * (spec.p - spec.k)
    acc, mass = factors[0], 0.0
    for fac in factors[1:]:
        acc, dropped = multiply(acc, fac, trunc)
        mass = mass * a_norm(fac) + dropped
    acc, dropped = project(acc, trunc.radius)
    mass += dropped
    return scale(acc, spec.lam), mass * abs(spec.lam)


def _nonlinearity_block(keys: np.ndarray, block: np.ndarray, spec: NonlinearitySpec,
                        trunc: TruncationPolicy):
    """Time-block version of :func:`nonlinearity`: one row per grid time."""
    norms = np.sum(np.abs(block), axis=1)
    factors = [(keys, block, norms)] * spec.k
    if spec.k < spec.p:
        factors += [(-keys[::-1], np.conj(block[:, ::-1]), norms)] * (spec.p - spec.k)
    acc_k, acc, mass = factors[0][0], factors[0][1], 0.0
    for fk, fb, fn in factors[1:]:
        plan = _plan_for(acc_k, fk)
        prod = plan.reduce(acc, fb)
        mag = np.max(np.abs(prod), axis=0)
        acc_k, acc, dropped = _truncate(plan.out_keys, prod, trunc, magnitude=mag)
        mass = mass * float(np.max(fn)) + dropped
    if trunc.radius is not None:
        inside = np.max(np.abs(acc_k), axis=1) <= trunc.radius
        if not np.all(inside):
            mass += float(np.max(np.sum(np.abs(acc[:, ~inside]), axis=1)))
            acc_k, acc = acc_k[inside], acc[:, inside]
    return acc_k, spec.lam * acc, mass * abs(spec.lam)


def certified_window(f: APSeries, spec: NonlinearitySpec, theta: float = 1.0) -> float:
    """Time on which the Duhamel map is certified to contract on the ``2||f||`` ball.

    ``theta * min(2^-p ||f||^(1-p), 1 / (2 L))`` with the Lipschitz constant
    ``L = p |lam| (2 ||f||)^(p-1)`` of the nonlinearity on that ball. Zero data
    gives ``inf``.
    """
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    norm = a_norm(f)
    if norm == 0:
        return math.inf
    p = spec.p
    ball = 2.0 ** (-p) * norm ** (1 - p)
    lip = p * abs(spec.lam) * (2.0 * norm) ** (p - 1)
    contraction = 1.0 / (2.0 * lip) if lip > 0 else math.inf
    return theta * min(ball, contraction)


@dataclass
class PicardDiagnostics:
    window: float
    iterations: int
    distances: List[float]
    ratios: List[float]
    max_norm: float
    ball_radius: float
    discarded_mass: float


def _block_distance(ka, A, kb, B) -> float:
    keys, (pa, pb) = _union([ka, kb])
    diff = np.zeros((A.shape[0], len(keys)), dtype=complex)
    diff[:, pa] += A
    diff[:, pb] -= B
    return float(np.max(np.sum(np.abs(diff), axis=1)))


def picard_solve(f: APSeries, spec: NonlinearitySpec, cfg: SolverConfig = SolverConfig(),
                 T: Optional[float] = None):
    """Fixed-point iteration of the Duhamel map on a uniform time grid.

    Starts from the free evolution and iterates ``u <- S(t) f - i int S(t-s) N(u(s)) ds``
    (trapezoidal quadrature, ``cfg.picard.grid`` intervals) on ``[0, T]``,
    where ``T`` defaults to ``certified_window(f, spec, cfg.theta)``.

    Returns
    -------
    trace : SolutionTrace
    diagnostics : PicardDiagnostics

    Raises
    ------
    ContractionError
        No convergence within ``max_iters``, or an iterate left the ball of
        radius ``2 ||f|| + tol``.
    """
    pc = cfg.picard
    norm = a_norm(f)
    window = certified_window(f, spec, cfg.theta)
    if T is None:
        T = window if math.isfinite(window) else 1.0
    times = np.linspace(0.0, T, pc.grid + 1)
    basis = f.basis
    ball = 2.0 * norm + pc.tol

    keys0 = f.keys
    free = f.coeffs[None, :] * np.exp(-1j * times[:, None] *
                                      phase_table(basis, keys0).squared[None, :])
    uk, ub = keys0, free
    distances, ratios = [], []
    mass, max_norm, it = 0.0, norm, 0
    converged = norm == 0 or spec.lam == 0
    while not converged:
        it += 1
        nk, nb, mass = _nonlinearity_block(uk, ub, spec, cfg.trunc)
        dk = duhamel_block(basis, nk, nb, times)
        vk, (pa, pb) = _union([keys0, nk])
        vb = np.zeros((len(times), len(vk)), dtype=complex)
        vb[:, pa] += free
        vb[:, pb] += dk
        dist = _block_distance(vk, vb, uk, ub)
        if distances:
            ratios.append(dist / distances[-1] if distances[-1] > 0 else 0.0)
        distances.append(dist)
        row_norms = np.sum(np.abs(vb), axis=1)
        max_norm = max(max_norm, float(np.max(row_norms)))
        uk, ub = vk, vb
        if max_norm > ball:
            raise ContractionError(
                f"iterate {it} left the ball: norm {max_norm:.6g} > {ball:.6g}", ratios)
        if dist < pc.tol:
            converged = True
        elif it >= pc.max_iters:
            raise ContractionError(
                f"no convergence after {it} iterations (last distance {dist:.3e})", ratios)

    snaps = [APSeries._from_canonical(basis, uk, row) for row in ub]
    trace = SolutionTrace.from_snapshots(
        times, snaps, times * mass, np.full(len(times), it),
        halt_reason="converged", meta={"window": window, "T": T})
    diag = PicardDiagnostics(window=window, iterations=it, distances=distances, ratios=ratios,
                             max_norm=max_norm, ball_radius=2.0 * norm,
                             discarded_mass=float(T * mass))
    return trace, diag


def _lawson_rk4_step(u: APSeries, dt: float, spec: NonlinearitySpec, trunc: TruncationPolicy):
    """One classical RK4 step in the frame rotating with the free flow."""

    def rate(v):
        n, d = nonlinearity(v, spec, trunc)
        return scale(n, -1j), d

    half = 0.5 * dt
    k1, d1 = rate(u)
    k2, d2 = rate(propagate(add(u, scale(k1, half)), half))
    k2 = propagate(k2, -half)
    k3, d3 = rate(propagate(add(u, scale(k2, half)), half))
    k3 = propagate(k3, -half)
    k4, d4 = rate(propagate(add(u, scale(k3, dt)), dt))
    k4 = propagate(k4, -dt)
    incr = add(add(k1, scale(add(k2, k3), 2.0)), k4)
    new = propagate(add(u, scale(incr, dt / 6.0)), dt)
    return new, dt * (d1 + 2.0 * d2 + 2.0 * d3 + d4) / 6.0


def step_solve(f: APSeries, spec: NonlinearitySpec,
               cfg: SolverConfig = SolverConfig()) -> SolutionTrace:
    """Fixed-step integration past the certified window.

    Linear phases are applied exactly and the nonlinearity is advanced with
    classical RK4 in the rotating frame. The run halts on the first of:
    ``norm_threshold`` (l1 norm above ``blowup_norm_threshold``),
    ``accuracy_abort`` (cumulative discarded mass above ``accuracy_fraction``
    of the current norm), ``non_finite``, ``t_end`` or ``max_steps``.
    """
    st = cfg.stepper
    u = f
    t, n, discarded = 0.0, 0, 0.0
    times, snaps, masses = [0.0], [f], [0.0]
    reason = None
    while reason is None:
        dt = st.dt
        if st.t_end is not None and st.t_end - t < dt:
            dt = st.t_end - t
        u, d = _lawson_rk4_step(u, dt, spec, cfg.trunc)
        n += 1
        t = n * st.dt if dt == st.dt else st.t_end
        discarded += d
        norm = a_norm(u)
        if not math.isfinite(norm):
            reason = "non_finite"
        elif norm > st.blowup_norm_threshold:
            reason = "norm_threshold"
        elif discarded > st.accuracy_fraction * norm:
            reason = "accuracy_abort"
        elif st.t_end is not None and t >= st.t_end:
            reason = "t_end"
        elif n >= st.max_steps:
            reason = "max_steps"
        if reason is not None or n % st.record_every == 0:
            times.append(t)
            snaps.append(u)
            masses.append(discarded)
    return SolutionTrace.from_snapshots(times, snaps, masses, halt_reason=reason,
                                        meta={"dt": st.dt, "steps": n})


def solve_backward(f: APSeries, spec: NonlinearitySpec,
                   cfg: SolverConfig = SolverConfig()) -> SolutionTrace:
    """Integrate towards negative times through ``v(t) = conj(u(-t))``.

    ``v`` solves the same equation with ``lam -> conj(lam)``, so the forward
    stepper is reused unchanged.
    """
    tr = step_solve(conjugate(f), spec.reversed_time(), cfg)
    snaps = [conjugate(s) for s in tr.snapshots]
    return SolutionTrace.from_snapshots(tr.times, snaps, tr.discarded_mass,
                                        halt_reason=tr.halt_reason, direction=-1,
                                        meta=dict(tr.meta))


class BlowupClass(str, enum.Enum):
    FORWARD = "ForwardFinite"
    BACKWARD = "BackwardFinite"
    BOTH = "BothTests"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self):
        return self.value


def classify_sign(lam, m) -> BlowupClass:
    """Sign test on the coupling and the mean value of the data.

    Forward blow-up when ``Re lam * Im m < 0`` or ``Im lam * Re m > 0``;
    backward when ``Re lam * Im m > 0`` or ``Im lam * Re m < 0``. Comparisons
    are exact.
    """
    lam, m = complex(lam), complex(m)
    a = lam.real * m.imag
    b = lam.imag * m.real
    forward = a < 0 or b > 0
    backward = a > 0 or b < 0
    if forward and backward:
        return BlowupClass.BOTH
    if forward:
        return BlowupClass.FORWARD
    if backward:
        return BlowupClass.BACKWARD
    return BlowupClass.INCONCLUSIVE


def classify_blowup(lam, f: APSeries) -> BlowupClass:
    return classify_sign(lam, mean_value(f))


def _mean_power(u: APSeries, spec: NonlinearitySpec) -> complex:
    unit = NonlinearitySpec(spec.p, spec.k, 1.0, spec.modulus)
    value = mean_value(nonlinearity(u, unit)[0])
    if spec.modulus:
        slack = 1e-12 * (1.0 + abs(value.real))
        assert value.real >= -slack and abs(value.imag) <= slack, \
            f"mean of |u|^p should be real and nonnegative, got {value}"
        return complex(max(value.real, 0.0))
    return value


def mean_power_series(trace: SolutionTrace, spec: NonlinearitySpec) -> np.ndarray:
    """Mean value of ``u^k conj(u)^(p-k)`` at every stored snapshot."""
    if any(s is None for s in trace.snapshots):
        raise ValueError("trace has no stored snapshots")
    return np.array([_mean_power(s, spec) for s in trace.snapshots], dtype=complex)


def zero_mode_residual(trace: SolutionTrace, spec: NonlinearitySpec) -> float:
    """Largest defect in the zero-mode balance along a trace.

    The zero frequency picks up no phase, so
    ``u_0(t) = f_0 - i lam int_0^t M(N(u)/lam) ds``; the integral is taken with
    the trapezoidal rule on the trace times.
    """
    if spec.lam == 0:
        return float(np.max(np.abs(trace.zero_mode - trace.zero_mode[0])))
    g = mean_power_series(trace, spec)
    t = trace.times * trace.direction
    integral = np.zeros(len(t), dtype=complex)
    integral[1:] = np.cumsum(0.5 * np.diff(t) * (g[1:] + g[:-1]))
    resid = trace.zero_mode - trace.zero_mode[0] + 1j * spec.lam * integral
    return float(np.max(np.abs(resid)))


def riccati_bound(f: APSeries, lam, p: int) -> Optional[float]:
    """Blow-up time of the comparison problem ``x' = |lam| x^p, x(0) = Re M(f)``.

    Only defined for purely imaginary ``lam`` with ``Im lam * Re M(f) > 0``;
    returns None otherwise. This is a diagnostic scale, not a proven bound.
    """
    lam = complex(lam)
    m = mean_value(f)
    if lam.real != 0 or p < 2 or not lam.imag * m.real > 0:
        return None
    x0 = m.real if lam.imag > 0 else -m.real
    if x0 <= 0:
        return None
    return x0 ** (1 - p) / (abs(lam) * (p - 1))
