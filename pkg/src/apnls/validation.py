"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import math
import numbers

import numpy as np

from .core import APSeries, Basis
from .exceptions import BasisMismatchError


def as_complex(value, name: str = "value") -> complex:
    """Accept a number, a ``[re, im]`` pair, or a string such as ``"1+2i"``."""
    if isinstance(value, bool):
        raise TypeError(f"{name} must be numeric, got a bool")
    if isinstance(value, numbers.Number):
        return complex(value)
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise TypeError(f"{name} must be a number, [re, im] or a complex string, got {value!r}")


def check_series(f, basis: Basis = None) -> APSeries:
    """Return ``f`` as an :class:`APSeries`, building it from a mapping when a basis is given."""
    if isinstance(f, APSeries):
        if basis is not None and f.basis != basis:
            raise BasisMismatchError("series basis does not match the expected basis")
    elif basis is not None and isinstance(f, dict):
        f = APSeries(basis, f)
    else:
        raise TypeError(f"expected an APSeries, got {type(f).__name__}")
    if not np.all(np.isfinite(f.coeffs)):
        raise ValueError("series has non-finite coefficients")
    return f


def check_time(t, name: str = "t") -> float:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"{name} must be finite")
    return t


def check_coupling_mean_pairs(X) -> np.ndarray:
    """Coerce ``X`` to a complex array of shape ``(n, 2)`` holding (coupling, mean) rows.

    Real input of shape ``(n, 4)`` is read as ``(Re lam, Im lam, Re m, Im m)``.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {X.shape}")
    if np.iscomplexobj(X):
        if X.shape[1] != 2:
            raise ValueError(f"complex input needs 2 columns (lam, m), got {X.shape[1]}")
        out = X.astype(complex)
    else:
        if X.shape[1] != 4:
            raise ValueError(f"real input needs 4 columns (Re lam, Im lam, Re m, Im m), "
                             f"got {X.shape[1]}")
        X = X.astype(float)
        out = np.stack([X[:, 0] + 1j * X[:, 1], X[:, 2] + 1j * X[:, 3]], axis=1)
    if not np.all(np.isfinite(out)):
        raise ValueError("input contains non-finite values")
    return out
