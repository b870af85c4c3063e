"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError


def as_rows(x, dim=None, what="x", allow_nan=False):
    """Return ``x`` as a float64 2-D array and whether it was a single vector.

    A 1-D input is treated as one row. ``dim`` (if given) is checked against
    the number of columns.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(what, "1-D or 2-D array", f"{arr.ndim}-D array")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError(what, dim, arr.shape[1])
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr, single


def check_same_rows(a, b, what_a="X", what_b="Y"):
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"rows of {what_b}", a.shape[0], b.shape[0])


def check_box(low, high, dim=None, what="box"):
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if low.shape != high.shape or low.ndim != 1:
        raise DimensionError(what, "two 1-D bounds of equal length", (low.shape, high.shape))
    if dim is not None and low.shape[0] != dim:
        raise DimensionError(what, dim, low.shape[0])
    if not np.all(high > low):
        raise ValueError(f"{what}: every upper bound must exceed its lower bound")
    return low, high
