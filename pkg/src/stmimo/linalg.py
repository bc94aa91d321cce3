"""Dense complex matrix primitives: pseudo-inverse, eigendecomposition,
least squares.

Thin contract wrappers over LAPACK (via numpy). The rank cutoff for the
rank-revealing routines is the conventional
``max(rows, cols) * machine_eps * largest_singular_value``.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_matrix

_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class EigResult:
    """Eigenvalues paired column-wise with eigenvectors; order unspecified."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _rcond(m):
    return max(m.shape) * _EPS


def pinv(m):
    """Moore-Penrose pseudo-inverse via SVD with a rank cutoff."""
    m = check_matrix(m)
    return np.linalg.pinv(m, rcond=_rcond(m))


def eig(m):
    """General (non-Hermitian) eigendecomposition of a square matrix."""
    m = check_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"eig requires a square matrix, got {m.shape}")
    w, v = np.linalg.eig(m)
    return EigResult(eigenvalues=w, eigenvectors=v)


def lstsq(a, b):
    """Minimum-norm least-squares solution of ``A @ X = B``."""
    a = check_matrix(a, "a")
    b = np.asarray(b, dtype=np.complex128)
    b2d = b if b.ndim == 2 else b[:, None]
    if a.shape[0] != b2d.shape[0]:
        raise ValueError(
            f"row counts differ: A is {a.shape}, B is {b.shape}"
        )
    x, _, _, _ = np.linalg.lstsq(a, b2d, rcond=_rcond(a))
    return x if b.ndim == 2 else x[:, 0]
