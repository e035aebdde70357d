"""Free Schrödinger flow and the Duhamel integral acting on series coefficients."""

from __future__ import annotations

import threading
from collections import OrderedDict
from typing import Sequence

import numpy as np

from .core import APSeries, Basis, _check_same_basis, _union
from .exceptions import DomainError

__all__ = ["PhaseTable", "phase_table", "propagate", "duhamel"]


class PhaseTable:
    """Squared frequencies ``(omega . n)^2`` for one support set.

    ``stamp`` identifies the support the table was built for; a table is only
    valid for key matrices with the same stamp.
    """

    __slots__ = ("basis", "squared", "stamp")

    def __init__(self, basis: Basis, keys: np.ndarray):
        keys = np.ascontiguousarray(keys, dtype=np.int64)
        freq = basis.frequencies(keys)
        self.basis = basis
        self.squared = freq * freq
        self.squared.setflags(write=False)
        self.stamp = (basis, keys.shape, keys.tobytes())

    def valid_for(self, basis: Basis, keys: np.ndarray) -> bool:
        return self.stamp == (basis, keys.shape, np.ascontiguousarray(keys).tobytes())

    def factors(self, t: float) -> np.ndarray:
        return np.exp(-1j * self.squared * t)


_TABLES: "OrderedDict[tuple, PhaseTable]" = OrderedDict()
_TABLE_LOCK = threading.Lock()
_TABLE_CACHE_SIZE = 512


def phase_table(basis: Basis, keys: np.ndarray) -> PhaseTable:
    """Cached :class:`PhaseTable`; a table is published only once fully built."""
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    stamp = (basis, keys.shape, keys.tobytes())
    with _TABLE_LOCK:
        table = _TABLES.get(stamp)
        if table is not None:
            _TABLES.move_to_end(stamp)
            return table
    table = PhaseTable(basis, keys)
    with _TABLE_LOCK:
        _TABLES[stamp] = table
        while len(_TABLES) > _TABLE_CACHE_SIZE:
            _TABLES.popitem(last=False)
    return table


def propagate(f: APSeries, t: float) -> APSeries:
    """Free evolution: multiply each coefficient by ``exp(-i (omega . n)^2 t)``."""
    if t == 0 or f.support_size == 0:
        return f
    table = phase_table(f.basis, f.keys)
    return APSeries._from_canonical(f.basis, f.keys, f.coeffs * table.factors(t))


def _grid_step(times: np.ndarray) -> float:
    if len(times) < 2:
        raise DomainError("a time grid needs at least two points")
    steps = np.diff(times)
    h = (times[-1] - times[0]) / (len(times) - 1)
    if not np.allclose(steps, h, rtol=1e-9, atol=1e-14 * max(1.0, abs(times[-1]))):
        raise DomainError("time grid must be uniform")
    return float(h)


def _grid_index(times: np.ndarray, t: float) -> int:
    scale = max(1.0, float(np.max(np.abs(times))))
    hit = np.flatnonzero(np.abs(times - t) <= 1e-12 * scale)
    if len(hit) == 0:
        raise DomainError(f"time {t} is not a grid point")
    return int(hit[0])


def duhamel(samples: Sequence[APSeries], times, t: float) -> APSeries:
    """``-i * int_0^t S(t - s) F(s) ds`` by the composite trapezoidal rule.

    Parameters
    ----------
    samples : sequence of APSeries
        Forcing ``F`` sampled at every point of ``times``.
    times : array_like
        Uniform grid containing both 0 and ``t``.
    t : float
        Upper limit; must be a grid point.
    """
    times = np.asarray(times, dtype=float)
    if len(samples) != len(times):
        raise ValueError("need one sample per grid point")
    _grid_step(times)
    i0, j = _grid_index(times, 0.0), _grid_index(times, t)
    basis = samples[0].basis
    for s in samples[1:]:
        _check_same_basis(samples[0], s)
    lo, hi = min(i0, j), max(i0, j)
    window = samples[lo:hi + 1]
    if j == i0 or all(s.support_size == 0 for s in window):
        return APSeries(basis)
    keys, positions = _union([s.keys for s in window])
    block = np.zeros((len(window), len(keys)), dtype=complex)
    for row, (s, pos) in enumerate(zip(window, positions)):
        block[row, pos] = s.coeffs
    h = times[j] - times[i0]
    h = h / (hi - lo)
    weights = np.full(len(window), h)
    weights[0] = weights[-1] = h / 2
    lag = times[j] - times[lo:hi + 1]
    sq = phase_table(basis, keys).squared
    terms = weights[:, None] * np.exp(-1j * lag[:, None] * sq[None, :]) * block
    return APSeries._from_canonical(basis, keys, -1j * np.sum(terms, axis=0))


def duhamel_block(basis: Basis, keys: np.ndarray, forcing: np.ndarray, times: np.ndarray):
    """Duhamel integral at every grid point of ``times`` (which must start at 0).

    ``forcing`` has one row per grid point over the support ``keys``. The
    propagator is factored as ``S(t_j) S(-t_l)`` so the quadrature reduces to a
    cumulative trapezoid sum.
    """
    h = _grid_step(times)
    sq = phase_table(basis, keys).squared
    rot = np.exp(1j * times[:, None] * sq[None, :]) * forcing
    acc = np.zeros_like(rot)
    acc[1:] = np.cumsum(0.5 * h * (rot[1:] + rot[:-1]), axis=0)
    return -1j * np.exp(-1j * times[:, None] * sq[None, :]) * acc
