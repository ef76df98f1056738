"""Small argument checks shared by the estimators and free functions."""

import numbers

import numpy as np


def check_scalar(x, name, *, target_type=numbers.Real, min_val=None, max_val=None,
                 include_min=True, include_max=True):
    """Validate a scalar argument and return it unchanged.

    Thin wrapper with the same semantics as :func:`sklearn.utils.check_scalar`
    but without coercion; raises ``TypeError``/``ValueError``.
    """
    if not isinstance(x, target_type) or isinstance(x, bool):
        raise TypeError(f"{name} must be an instance of {target_type}, got {type(x).__name__}")
    if not np.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x}")
    if min_val is not None:
        bad = x < min_val if include_min else x <= min_val
        if bad:
            op = ">=" if include_min else ">"
            raise ValueError(f"{name} == {x}, must be {op} {min_val}")
    if max_val is not None:
        bad = x > max_val if include_max else x >= max_val
        if bad:
            op = "<=" if include_max else "<"
            raise ValueError(f"{name} == {x}, must be {op} {max_val}")
    return x


def as_vector2(k, name="k"):
    """Return ``k`` as a finite float64 array of shape (2,)."""
    arr = np.asarray(k, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"{name} must have shape (2,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def as_kpoints(k):
    """Return an (n, 2) float array of quasimomenta (a single point is promoted)."""
    arr = np.asarray(k, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected quasimomenta of shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("quasimomenta must be finite")
    return arr
