"""Input validation helpers shared across the package.

All numerical routines operate on complex128 numpy arrays; these helpers
coerce and shape-check inputs once at the public boundary so the math code
can stay assertion-free.
"""

import numpy as np


def as_complex_array(x, name="array"):
    """Coerce `x` to a complex128 ndarray without copying when possible."""
    arr = np.asarray(x)
    if arr.dtype != np.complex128:
        arr = arr.astype(np.complex128)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_tensor3(x, name="tensor"):
    """Validate a dense 3-way tensor and return it as complex128."""
    arr = as_complex_array(x, name)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-dimensional, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty mode: shape {arr.shape}")
    return arr


def check_matrix(x, name="matrix"):
    """Validate a 2-D complex matrix."""
    arr = as_complex_array(x, name)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def check_mode(mode):
    """Modes are numbered 1..3 in the public API."""
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode


def check_same_shape(x, y, name_x="x", name_y="y"):
    if x.shape != y.shape:
        raise ValueError(
            f"{name_x} and {name_y} must have identical shapes, "
            f"got {x.shape} and {y.shape}"
        )


def check_matching_columns(*matrices):
    """All factor matrices of a CP model share the column count."""
    cols = {m.shape[1] for m in matrices}
    if len(cols) != 1:
        raise ValueError(f"column counts differ: {[m.shape for m in matrices]}")
    return cols.pop()
