"""Brute-force references for testing.

Nothing here is used by the solvers, and nothing here reuses the norm or
product code of :mod:`apnls.core`: the point is an independent route to the
same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .core import APSeries
from .exceptions import SupportClosureError
from .nls import NonlinearitySpec, SolutionTrace

__all__ = ["GridWindow", "sample", "grid_mean", "ode_reference"]

_CHUNK = 1 << 16


@dataclass(frozen=True)
class GridWindow:
    """Uniform midpoint sampling of ``[-half_width, half_width]``.

    ``samples`` defaults to ``ceil(100 * half_width)``, enough to resolve
    frequencies up to about 20.
    """

    half_width: float
    samples: Optional[int] = None
    rule: str = "midpoint"

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.samples is None:
            object.__setattr__(self, "samples", max(2, math.ceil(100 * self.half_width)))
        if self.samples < 2:
            raise ValueError("need at least two samples")
        if self.rule != "midpoint":
            raise ValueError(f"unsupported quadrature rule {self.rule!r}")

    def nodes(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        stop = self.samples if stop is None else stop
        h = 2.0 * self.half_width / self.samples
        return -self.half_width + h * (np.arange(start, stop) + 0.5)


def _values(f: APSeries, x: np.ndarray) -> np.ndarray:
    omega = np.array(f.basis.generators, dtype=float)
    freqs = f.keys.astype(float) @ omega
    out = np.zeros(len(x), dtype=complex)
    for nu, c in zip(freqs, f.coeffs):
        out += c * np.exp(1j * nu * x)
    return out


def sample(f: APSeries, w: GridWindow) -> np.ndarray:
    """Point values at every node of the window."""
    return np.concatenate([_values(f, w.nodes(a, min(a + _CHUNK, w.samples)))
                           for a in range(0, w.samples, _CHUNK)])


def grid_mean(f: APSeries, w: GridWindow,
              pointwise: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> complex:
    """Midpoint approximation of ``(1 / 2L) int_{-L}^{L} f(x) dx``.

    ``pointwise`` is applied to the sampled values first, e.g.
    ``lambda v: abs(v) ** 2`` averages ``|f|^2``.
    """
    total = 0j
    for a in range(0, w.samples, _CHUNK):
        v = _values(f, w.nodes(a, min(a + _CHUNK, w.samples)))
        if pointwise is not None:
            v = pointwise(v)
        total += complex(np.sum(v))
    return total / w.samples


def _interaction_table(support: np.ndarray, spec: NonlinearitySpec, radius: int):
    """All index tuples of the nonlinearity landing back in the support."""
    s, g = support.shape
    signs = [1] * spec.k + [-1] * (spec.p - spec.k)
    grids = np.meshgrid(*([np.arange(s)] * spec.p), indexing="ij")
    idx = np.stack([m.reshape(-1) for m in grids], axis=1)
    target = np.zeros((len(idx), g), dtype=np.int64)
    for col, sg in enumerate(signs):
        target += sg * support[idx[:, col]]
    # Mixed-radix codes turn the vector lookup into a sorted search.
    lo = np.minimum(target.min(axis=0), support.min(axis=0))
    span = np.maximum(target.max(axis=0), support.max(axis=0)) - lo + 1
    stride = np.cumprod(np.concatenate(([1], span[::-1][:-1])))[::-1]
    sup_code = (support - lo) @ stride
    tgt_code = (target - lo) @ stride
    order = np.argsort(sup_code)
    pos = np.clip(np.searchsorted(sup_code[order], tgt_code), 0, s - 1)
    found = sup_code[order][pos] == tgt_code
    inside = np.max(np.abs(target), axis=1) <= radius
    missing = ~found & inside
    if np.any(missing):
        escaping = sorted({tuple(v) for v in target[missing].tolist()})
        raise SupportClosureError(
            f"{len(escaping)} frequencies inside radius {radius} are missing from the support",
            escaping)
    return idx[found], order[pos[found]]


def ode_reference(f: APSeries, spec: NonlinearitySpec, support: Sequence, t_end: float,
                  tol: float = 1e-10, radius: Optional[int] = None, times=None,
                  max_step: float = np.inf) -> SolutionTrace:
    """Adaptive DOP853 integration of the coefficient ODE on a fixed support.

    Parameters
    ----------
    f : APSeries
        Initial data; its support must lie in ``support``.
    support : sequence of frequency vectors
        Fixed mode set. The nonlinearity is projected onto it.
    t_end : float
    tol : float
        Relative and absolute local error tolerance.
    radius : int, optional
        Max-norm box in which the support must be closed under the
        nonlinearity; defaults to the largest max-norm in the support.
        Generated frequencies outside the box are discarded.
    times : array_like, optional
        Output times; default 101 equally spaced points on ``[0, t_end]``.
    """
    g = f.basis.dim
    sup = np.array(sorted({tuple(int(v) for v in n) for n in
                           (((x,) if np.isscalar(x) else x) for x in support)}),
                   dtype=np.int64).reshape(-1, g)
    radius = int(np.max(np.abs(sup))) if radius is None else int(radius)
    index = {tuple(n): i for i, n in enumerate(sup.tolist())}
    y0 = np.zeros(len(sup), dtype=complex)
    for n, c in zip(f.keys.tolist(), f.coeffs):
        if tuple(n) not in index:
            raise SupportClosureError("initial data is not inside the support", [tuple(n)])
        y0[index[tuple(n)]] = c
    omega = np.array(f.basis.generators, dtype=float)
    phase = (sup.astype(float) @ omega) ** 2
    if spec.lam != 0:
        tuples, target = _interaction_table(sup, spec, radius)
    n_modes, k = len(sup), spec.k

    def rhs(_t, y):
        dy = -1j * phase * y
        if spec.lam != 0 and len(target):
            term = np.ones(len(target), dtype=complex)
            for col in range(spec.p):
                v = y[tuples[:, col]]
                term *= v if col < k else np.conj(v)
            nl = (np.bincount(target, term.real, n_modes)
                  + 1j * np.bincount(target, term.imag, n_modes))
            dy = dy - 1j * spec.lam * nl
        return dy

    times = np.linspace(0.0, t_end, 101) if times is None else np.asarray(times, dtype=float)
    # per-component atol shrinks with the mode count so summed l1 error tracks tol
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", t_eval=times, rtol=tol,
                    atol=tol / n_modes, max_step=max_step)
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    snaps = [APSeries(f.basis, list(zip(map(tuple, sup.tolist()), col)))
             for col in sol.y.T]
    return SolutionTrace.from_snapshots(sol.t, snaps, np.zeros(len(sol.t)),
                                        halt_reason="t_end",
                                        meta={"nfev": int(sol.nfev), "tol": tol})
