"""Sparse Fourier representation of the Wiener-type algebra on a finite frequency basis.

A series is stored as a lexicographically sorted integer key matrix of shape
``(S, G)`` together with a complex coefficient vector of length ``S``. Every
operation returns a new immutable series.
"""

from __future__ import annotations

import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import BasisMismatchError, CapacityError, DimensionError

__all__ = [
    "NAMED_CONSTANTS",
    "Basis",
    "TruncationPolicy",
    "NO_TRUNCATION",
    "APSeries",
    "frequency_of",
    "add",
    "scale",
    "conjugate",
    "multiply",
    "project",
    "a_norm",
    "l2_norm",
    "mean_value",
    "evaluate",
    "sobolev_norm",
    "collision_scan",
    "random_series",
]

_SQRT5 = math.sqrt(5.0)

NAMED_CONSTANTS = {
    "sqrt2": math.sqrt(2.0),
    "sqrt3": math.sqrt(3.0),
    "sqrt5": _SQRT5,
    "golden": (1.0 + _SQRT5) / 2.0,
    "pi": math.pi,
    "e": math.e,
}

DEFAULT_INDEPENDENCE_TOL = 1e-9
_SCAN_WARN_ENTRIES = 10**6


def _resolve_generator(value) -> float:
    if isinstance(value, str):
        tag = value.strip()
        sign = 1.0
        if tag.startswith("-"):
            sign, tag = -1.0, tag[1:]
        if tag in NAMED_CONSTANTS:
            return sign * NAMED_CONSTANTS[tag]
        return sign * float(tag)
    return float(value)


@dataclass(frozen=True)
class Basis:
    """Finite list of real frequency generators.

    Parameters
    ----------
    generators : sequence of float or str
        Generator frequencies in radians per unit length. Strings are parsed as
        decimals or looked up in :data:`NAMED_CONSTANTS` (``"sqrt2"``, ``"pi"``...).
    independence_tol : float
        Two integer combinations whose real frequencies differ by less than this
        are treated as the same frequency.
    declared_independent : bool
        User assertion that the generators are rationally independent. When
        False, norms and means group coinciding frequencies first.
    """

    generators: Tuple[float, ...]
    independence_tol: float = DEFAULT_INDEPENDENCE_TOL
    declared_independent: bool = True
    _array: np.ndarray = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        gens = tuple(_resolve_generator(g) for g in self.generators)
        if len(gens) == 0:
            raise DimensionError("a basis needs at least one generator")
        if not all(math.isfinite(g) for g in gens):
            raise ValueError(f"generators must be finite, got {gens}")
        tol = float(self.independence_tol)
        if not (tol >= 0.0 and math.isfinite(tol)):
            raise ValueError(f"independence_tol must be finite and >= 0, got {tol}")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "independence_tol", tol)
        object.__setattr__(self, "declared_independent", bool(self.declared_independent))
        arr = np.array(gens, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "_array", arr)
        if any(g == 0.0 for g in gens):
            warnings.warn("basis contains a zero generator; it duplicates the zero mode",
                          stacklevel=3)
        if len(set(gens)) != len(gens):
            warnings.warn("basis contains repeated generators", stacklevel=3)

    @classmethod
    def from_spec(cls, items: Sequence, independence_tol: float = DEFAULT_INDEPENDENCE_TOL,
                  declared_independent: bool = True) -> "Basis":
        return cls(tuple(items), independence_tol, declared_independent)

    @property
    def dim(self) -> int:
        return len(self.generators)

    def frequencies(self, keys: np.ndarray) -> np.ndarray:
        """Real frequencies of the rows of an integer key matrix.

        The dot product is accumulated one generator at a time in ascending
        order, so the result matches :func:`frequency_of` bit for bit.
        """
        keys = np.asarray(keys)
        out = np.zeros(keys.shape[0], dtype=float)
        for j, w in enumerate(self.generators):
            out = out + w * keys[:, j]
        return out


def frequency_of(basis: Basis, n) -> float:
    """Real frequency ``sum_j omega_j n_j`` of one frequency vector."""
    n = _as_freq_vector(n, basis.dim)
    total = 0.0
    for w, nj in zip(basis.generators, n):
        total = total + w * nj
    return float(total)


@dataclass(frozen=True)
class TruncationPolicy:
    """How products are pruned.

    Parameters
    ----------
    eps : float
        Product coefficients with magnitude below ``eps`` are dropped.
    max_support : int or None
        Largest support a product may keep. With ``eps > 0`` the smallest
        entries are dropped to fit; with ``eps == 0`` exceeding it is an error.
    radius : int or None
        Max-norm radius of the frequency box kept by
        :func:`apnls.nls.nonlinearity`; applied to the finished product only.
    """

    eps: float = 0.0
    max_support: Optional[int] = None
    radius: Optional[int] = None

    def __post_init__(self):
        if not (self.eps >= 0.0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be finite and >= 0, got {self.eps}")
        if self.max_support is not None and self.max_support < 1:
            raise ValueError("max_support must be positive")
        if self.radius is not None and self.radius < 0:
            raise ValueError("radius must be >= 0")


NO_TRUNCATION = TruncationPolicy()


def _as_freq_vector(n, dim: int) -> Tuple[int, ...]:
    if isinstance(n, (int, np.integer)):
        n = (int(n),)
    n = tuple(int(v) for v in n)
    if len(n) != dim:
        raise DimensionError(f"frequency vector {n} has length {len(n)}, basis has {dim}")
    return n


def _lex_order(keys: np.ndarray) -> np.ndarray:
    if keys.shape[0] == 0:
        return np.zeros(0, dtype=np.intp)
    return np.lexsort(keys.T[::-1])


def _group_starts(sorted_keys: np.ndarray) -> np.ndarray:
    if sorted_keys.shape[0] == 0:
        return np.zeros(0, dtype=np.intp)
    change = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    return np.concatenate(([0], np.flatnonzero(change) + 1)).astype(np.intp)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class APSeries:
    """Finitely supported almost periodic Fourier series.

    Parameters
    ----------
    basis : Basis
    terms : mapping or iterable of (frequency vector, coefficient), optional
        For a one-generator basis the frequency vector may be a bare int.
        Repeated vectors in an iterable are summed; exact zeros are purged.

    Examples
    --------
    >>> b = Basis((1.0, "sqrt2"))
    >>> f = APSeries(b, {(1, 0): 1.0, (0, 1): 1.0})
    >>> a_norm(f)
    2.0
    """

    __slots__ = ("basis", "keys", "coeffs")
    __hash__ = None

    def __init__(self, basis: Basis, terms: Union[Mapping, Iterable, None] = None):
        if not isinstance(basis, Basis):
            raise TypeError("basis must be a Basis")
        items = list(terms.items()) if isinstance(terms, Mapping) else list(terms or ())
        g = basis.dim
        keys = np.array([_as_freq_vector(n, g) for n, _ in items], dtype=np.int64).reshape(-1, g)
        coeffs = np.array([complex(c) for _, c in items], dtype=complex)
        order = _lex_order(keys)
        keys, coeffs = keys[order], coeffs[order]
        starts = _group_starts(keys)
        if len(starts) != keys.shape[0]:
            coeffs = np.add.reduceat(coeffs, starts) if len(starts) else coeffs
            keys = keys[starts]
        self._set(basis, keys, coeffs)

    def _set(self, basis, keys, coeffs):
        keep = coeffs != 0
        if not np.all(keep):
            keys, coeffs = keys[keep], coeffs[keep]
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "keys", _readonly(np.ascontiguousarray(keys, dtype=np.int64)))
        object.__setattr__(self, "coeffs", _readonly(np.ascontiguousarray(coeffs, dtype=complex)))

    def __setattr__(self, name, value):
        raise AttributeError("APSeries is immutable")

    @classmethod
    def _from_canonical(cls, basis: Basis, keys: np.ndarray, coeffs: np.ndarray) -> "APSeries":
        obj = cls.__new__(cls)
        obj._set(basis, keys, coeffs)
        return obj

    @classmethod
    def zero(cls, basis: Basis) -> "APSeries":
        return cls(basis)

    @classmethod
    def constant(cls, basis: Basis, value) -> "APSeries":
        return cls(basis, {(0,) * basis.dim: value})

    @classmethod
    def from_literal(cls, basis: Basis, rows: Iterable[Sequence]) -> "APSeries":
        """Build from ``[n_1, ..., n_G, re, im]`` rows."""
        g = basis.dim
        items = []
        for row in rows:
            row = list(row)
            if len(row) != g + 2:
                raise DimensionError(f"term {row} should have {g} indices plus re, im")
            idx = row[:g]
            if any(float(v) != int(v) for v in idx):
                raise ValueError(f"frequency indices must be integers, got {idx}")
            items.append((tuple(int(v) for v in idx), complex(float(row[g]), float(row[g + 1]))))
        return cls(basis, items)

    def to_literal(self) -> list:
        return [[int(v) for v in n] + [float(c.real), float(c.imag)]
                for n, c in zip(self.keys, self.coeffs)]

    @property
    def support_size(self) -> int:
        return int(self.keys.shape[0])

    def __len__(self):
        return self.support_size

    def terms(self):
        """Iterate ``(frequency vector, coefficient)`` in canonical order."""
        for n, c in zip(self.keys, self.coeffs):
            yield tuple(int(v) for v in n), complex(c)

    def as_dict(self) -> dict:
        return dict(self.terms())

    def coefficient(self, n) -> complex:
        n = np.array(_as_freq_vector(n, self.basis.dim), dtype=np.int64)
        hit = np.flatnonzero(np.all(self.keys == n, axis=1))
        return complex(self.coeffs[hit[0]]) if len(hit) else 0j

    def frequencies(self) -> np.ndarray:
        return self.basis.frequencies(self.keys)

    def __eq__(self, other):
        if not isinstance(other, APSeries):
            return NotImplemented
        return (self.basis == other.basis and self.keys.shape == other.keys.shape
                and np.array_equal(self.keys, other.keys)
                and np.array_equal(self.coeffs, other.coeffs))

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, APSeries):
            return multiply(self, other)[0]
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __repr__(self):
        body = ", ".join(f"{n}: {c:.6g}" for n, c in list(self.terms())[:6])
        more = "" if self.support_size <= 6 else f", ... ({self.support_size} terms)"
        return f"APSeries({{{body}{more}}}, G={self.basis.dim})"


def _check_same_basis(f: APSeries, g: APSeries):
    if f.basis != g.basis:
        raise BasisMismatchError("series are defined on different bases")


def _union(keys_list: Sequence[np.ndarray]):
    """Sorted union of several canonical key matrices and each one's positions in it."""
    allk = np.concatenate(keys_list, axis=0)
    order = _lex_order(allk)
    srt = allk[order]
    starts = _group_starts(srt)
    group = np.zeros(len(srt), dtype=np.intp)
    if len(starts) > 1:
        group[starts[1:]] = 1
        group = np.cumsum(group)
    pos = np.empty(len(allk), dtype=np.intp)
    pos[order] = group
    out, offset = [], 0
    for k in keys_list:
        out.append(pos[offset:offset + len(k)])
        offset += len(k)
    return srt[starts], out


def add(f: APSeries, g: APSeries) -> APSeries:
    _check_same_basis(f, g)
    if g.support_size == 0:
        return f
    if f.support_size == 0:
        return g
    keys, (pf, pg) = _union([f.keys, g.keys])
    out = np.zeros(len(keys), dtype=complex)
    out[pf] += f.coeffs
    out[pg] += g.coeffs
    return APSeries._from_canonical(f.basis, keys, out)


def scale(f: APSeries, c) -> APSeries:
    return APSeries._from_canonical(f.basis, f.keys, f.coeffs * complex(c))


def conjugate(f: APSeries) -> APSeries:
    """Complex conjugate of the function: ``(n, c) -> (-n, conj(c))``."""
    # Negation reverses lexicographic order exactly.
    return APSeries._from_canonical(f.basis, -f.keys[::-1], np.conj(f.coeffs[::-1]))


class _ConvolutionPlan:
    """Index bookkeeping for the product of two fixed supports.

    Contributions to each output frequency are ordered by the left factor's
    canonical index. Before the per-output reduction, each run of
    contributions is folded once (first with last, second with second-to-last,
    ...). The folded run is invariant under reversal, which makes the product
    commute exactly with conjugation.
    """

    __slots__ = ("out_keys", "left", "right", "fold_a", "fold_b", "fold_pair", "starts")

    def __init__(self, keys_a: np.ndarray, keys_b: np.ndarray):
        sa, sb = len(keys_a), len(keys_b)
        li = np.repeat(np.arange(sa, dtype=np.intp), sb)
        ri = np.tile(np.arange(sb, dtype=np.intp), sa)
        cand = keys_a[li] + keys_b[ri]
        order = _lex_order(cand)
        li, ri, cand = li[order], ri[order], cand[order]
        starts = _group_starts(cand)
        lengths = np.diff(np.append(starts, len(cand)))
        s_rep = np.repeat(starts, lengths)
        l_rep = np.repeat(lengths, lengths)
        local = np.arange(len(cand)) - s_rep
        half = l_rep // 2
        paired = local < half
        middle = (l_rep % 2 == 1) & (local == half)
        sel = np.flatnonzero(paired | middle)
        self.out_keys = _readonly(cand[starts])
        self.left = li
        self.right = ri
        self.fold_a = sel
        self.fold_b = np.where(paired[sel], s_rep[sel] + l_rep[sel] - 1 - local[sel], sel)
        self.fold_pair = paired[sel]
        folded_len = (lengths + 1) // 2
        self.starts = np.concatenate(([0], np.cumsum(folded_len)[:-1])).astype(np.intp)

    def reduce(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Convolve coefficient arrays along the last axis (leading axes broadcast)."""
        prod = a[..., self.left] * b[..., self.right]
        x = prod[..., self.fold_a]
        folded = np.where(self.fold_pair, x + prod[..., self.fold_b], x)
        return np.add.reduceat(folded, self.starts, axis=-1)


_PLAN_CACHE: "OrderedDict[tuple, _ConvolutionPlan]" = OrderedDict()
_PLAN_LOCK = threading.Lock()
_PLAN_CACHE_SIZE = 256
_PLAN_CACHE_MAX_PAIRS = 2_000_000


def _plan_for(keys_a: np.ndarray, keys_b: np.ndarray) -> _ConvolutionPlan:
    npairs = len(keys_a) * len(keys_b)
    if npairs > _PLAN_CACHE_MAX_PAIRS:
        return _ConvolutionPlan(keys_a, keys_b)
    token = (keys_a.shape, keys_a.tobytes(), keys_b.shape, keys_b.tobytes())
    with _PLAN_LOCK:
        plan = _PLAN_CACHE.get(token)
        if plan is not None:
            _PLAN_CACHE.move_to_end(token)
            return plan
    plan = _ConvolutionPlan(keys_a, keys_b)
    with _PLAN_LOCK:
        _PLAN_CACHE[token] = plan
        while len(_PLAN_CACHE) > _PLAN_CACHE_SIZE:
            _PLAN_CACHE.popitem(last=False)
    return plan


def _truncate(keys: np.ndarray, coeffs: np.ndarray, trunc: TruncationPolicy, magnitude=None):
    """Apply threshold and support cap; return kept keys, coeffs and dropped l1 mass.

    ``magnitude`` ranks entries (defaults to ``abs(coeffs)``); for time blocks it
    is the per-key maximum over time and the dropped mass is the largest
    per-row dropped l1 sum.
    """
    mag = np.abs(coeffs) if magnitude is None else magnitude
    keep = mag > 0
    if trunc.eps > 0:
        keep &= mag >= trunc.eps
    if trunc.max_support is not None and np.count_nonzero(keep) > trunc.max_support:
        if trunc.eps == 0:
            raise CapacityError(
                f"product support {np.count_nonzero(keep)} exceeds max_support "
                f"{trunc.max_support} and no threshold is set")
        idx = np.flatnonzero(keep)
        # Largest magnitudes win; ties resolved by canonical position.
        rank = np.lexsort((idx, -mag[idx]))
        keep = np.zeros_like(keep)
        keep[idx[rank[:trunc.max_support]]] = True
    if np.all(keep):
        return keys, coeffs, 0.0
    dropped = np.abs(coeffs[..., ~keep])
    mass = float(np.max(np.sum(dropped, axis=-1))) if dropped.ndim > 1 and dropped.size \
        else float(np.sum(dropped))
    return keys[keep], coeffs[..., keep], mass


def multiply(f: APSeries, g: APSeries, trunc: TruncationPolicy = NO_TRUNCATION):
    """Product of two series with optional truncation.

    Returns
    -------
    product : APSeries
    discarded_mass : float
        l1 norm of the coefficients removed by ``trunc``.
    """
    _check_same_basis(f, g)
    if f.support_size == 0 or g.support_size == 0:
        return APSeries._from_canonical(f.basis, f.keys[:0], f.coeffs[:0]), 0.0
    plan = _plan_for(f.keys, g.keys)
    coeffs = plan.reduce(f.coeffs, g.coeffs)
    keys, coeffs, mass = _truncate(plan.out_keys, coeffs, trunc)
    return APSeries._from_canonical(f.basis, keys, coeffs), mass


def project(f: APSeries, radius: Optional[int]):
    """Keep frequency vectors with max-norm at most ``radius``; return (series, dropped l1)."""
    if radius is None or f.support_size == 0:
        return f, 0.0
    inside = np.max(np.abs(f.keys), axis=1) <= radius
    if np.all(inside):
        return f, 0.0
    mass = float(np.sum(np.abs(f.coeffs[~inside])))
    return APSeries._from_canonical(f.basis, f.keys[inside], f.coeffs[inside]), mass


def a_norm(f: APSeries) -> float:
    """l1 norm of the coefficients."""
    return float(np.sum(np.abs(f.coeffs)))


def _frequency_groups(f: APSeries):
    """Cluster terms whose real frequencies agree within the basis tolerance.

    Returns the group index of every term and the representative frequency
    (smallest member) of every group.
    """
    freqs = f.frequencies()
    order = np.argsort(freqs, kind="stable")
    fs = freqs[order]
    new = np.ones(len(fs), dtype=bool)
    new[1:] = np.diff(fs) >= f.basis.independence_tol
    gid_sorted = np.cumsum(new) - 1
    gid = np.empty(len(fs), dtype=np.intp)
    gid[order] = gid_sorted
    return gid, fs[new]


def _group_totals(f: APSeries):
    gid, rep = _frequency_groups(f)
    totals = np.zeros(len(rep), dtype=complex)
    # Terms are visited in canonical order within each group.
    for i, c in zip(gid, f.coeffs):
        totals[i] += c
    return totals, rep


def l2_norm(f: APSeries) -> float:
    """Mean-square norm via Parseval, grouping coinciding frequencies when needed."""
    if f.support_size == 0:
        return 0.0
    if f.basis.declared_independent:
        return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))
    totals, _ = _group_totals(f)
    return float(np.sqrt(np.sum(np.abs(totals) ** 2)))


def mean_value(f: APSeries) -> complex:
    """Long-run average of the function, i.e. its zero-frequency Fourier coefficient."""
    if f.support_size == 0:
        return 0j
    if f.basis.declared_independent:
        hit = np.flatnonzero(~np.any(f.keys, axis=1))
        return complex(f.coeffs[hit[0]]) if len(hit) else 0j
    near_zero = np.abs(f.frequencies()) < f.basis.independence_tol
    total = 0j
    for c in f.coeffs[near_zero]:
        total += c
    return complex(total)


def evaluate(f: APSeries, x):
    """Point values of the series; ``x`` may be a scalar or an array."""
    xa = np.asarray(x, dtype=float)
    if f.support_size == 0:
        return 0j if xa.ndim == 0 else np.zeros(xa.shape, dtype=complex)
    freqs = f.frequencies()
    vals = np.sum(f.coeffs * np.exp(1j * xa[..., None] * freqs), axis=-1)
    return complex(vals) if xa.ndim == 0 else vals


def sobolev_norm(f: APSeries, s) -> float:
    """Quasi-periodic Sobolev norm with weight ``prod_j (1 + n_j^2)^(s_j / 2)``."""
    s = np.asarray(s, dtype=float).reshape(-1)
    if len(s) != f.basis.dim:
        raise DimensionError(f"weight exponent has length {len(s)}, basis has {f.basis.dim}")
    if f.support_size == 0:
        return 0.0
    w = np.prod((1.0 + f.keys.astype(float) ** 2) ** (s / 2.0), axis=1)
    return float(np.sqrt(np.sum(w ** 2 * np.abs(f.coeffs) ** 2)))


def collision_scan(basis: Basis, radius: int, tol: Optional[float] = None):
    """Find distinct frequency vectors in a box whose real frequencies coincide.

    Parameters
    ----------
    basis : Basis
    radius : int
        Max-norm radius of the scanned box, at least 1.
    tol : float, optional
        Collision tolerance; defaults to ``basis.independence_tol``.

    Returns
    -------
    list of (tuple, tuple)
        Pairs ``(n, m)`` with ``n`` lexicographically larger than ``m``, sorted.
        An empty list is evidence, not proof, of independence inside the box.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    tol = basis.independence_tol if tol is None else float(tol)
    g = basis.dim
    entries = (2 * radius + 1) ** g
    if entries > _SCAN_WARN_ENTRIES:
        warnings.warn(f"collision scan enumerates {entries} frequency vectors", stacklevel=2)
    axis = np.arange(-radius, radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * g), indexing="ij")
    keys = np.stack([m.reshape(-1) for m in grids], axis=1)
    freqs = basis.frequencies(keys)
    order = np.argsort(freqs, kind="stable")
    fs = freqs[order]
    pairs = []
    shift = 1
    while shift < len(fs):
        close = np.flatnonzero(fs[shift:] - fs[:-shift] < tol)
        if len(close) == 0:
            break
        for i in close:
            a = tuple(int(v) for v in keys[order[i]])
            b = tuple(int(v) for v in keys[order[i + shift]])
            pairs.append((a, b) if a > b else (b, a))
        shift += 1
    return sorted(set(pairs))


def random_series(basis: Basis, terms: int, radius: int, rng: np.random.Generator,
                  norm: Optional[float] = None, min_frequency: float = 0.0) -> APSeries:
    """Random series with distinct frequency vectors drawn from a box.

    Coefficients are uniform in the unit disk; ``norm`` rescales to a given l1
    norm. Nonzero vectors whose frequency is below ``min_frequency`` in
    magnitude are skipped, which keeps near-resonant terms out of test corpora.
    """
    g = basis.dim
    axis = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([axis] * g), indexing="ij")
    pool = np.stack([m.reshape(-1) for m in grids], axis=1)
    if min_frequency > 0:
        fr = np.abs(basis.frequencies(pool))
        pool = pool[(fr >= min_frequency) | ~np.any(pool, axis=1)]
    terms = min(terms, len(pool))
    pick = rng.choice(len(pool), size=terms, replace=False)
    r = np.sqrt(rng.uniform(0.05, 1.0, size=terms))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=terms)
    coeffs = r * np.exp(1j * phase)
    f = APSeries(basis, [(tuple(pool[i]), c) for i, c in zip(pick, coeffs)])
    if norm is not None:
        f = scale(f, norm / a_norm(f))
    return f
