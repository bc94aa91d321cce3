"""Dense complex 3-way tensor algebra: unfoldings, Khatri-Rao, CP synthesis.

A tensor is a plain ``numpy.ndarray`` of shape ``(d1, d2, d3)``; element
``(i1, i2, i3)`` (1-based in the docs below) lives at ``t[i1-1, i2-1, i3-1]``.

Unfolding convention (the one used everywhere in this package): the mode-3
unfolding of a ``(M, N, Q)`` tensor is ``MN x Q`` with element ``(m, n, q)``
placed at row ``(m-1)*N + n``, so a CP tensor with factors ``(A, B, C)``
unfolds to ``khatri_rao(A, B) @ C.T``. Modes 1 and 2 follow the cyclic
analogue:

    mode 1: (d2*d3) x d1,  row (n-1)*Q + q,  equals khatri_rao(B, C) @ A.T
    mode 2: (d3*d1) x d2,  row (q-1)*M + m,  equals khatri_rao(C, A) @ B.T

All functions are pure and never mutate their inputs.
"""

import numpy as np

from .validation import (
    check_matching_columns,
    check_matrix,
    check_mode,
    check_same_shape,
    check_tensor3,
)

# Axis orders realizing the cyclic unfolding convention above.
_UNFOLD_ORDER = {1: (1, 2, 0), 2: (2, 0, 1), 3: (0, 1, 2)}


def unfold(t, mode):
    """Unfold a 3-way tensor into a matrix along `mode` (1, 2 or 3)."""
    t = check_tensor3(t)
    check_mode(mode)
    order = _UNFOLD_ORDER[mode]
    moved = np.transpose(t, order)
    return moved.reshape(moved.shape[0] * moved.shape[1], moved.shape[2]).copy()


def fold(mat, mode, shape):
    """Inverse of :func:`unfold`: rebuild the tensor of `shape` from `mat`."""
    mat = check_matrix(mat)
    check_mode(mode)
    d1, d2, d3 = shape
    order = _UNFOLD_ORDER[mode]
    unfolded_shape = (shape[order[0]], shape[order[1]], shape[order[2]])
    if mat.shape != (unfolded_shape[0] * unfolded_shape[1], unfolded_shape[2]):
        raise ValueError(
            f"matrix shape {mat.shape} does not match mode-{mode} unfolding "
            f"of tensor shape {shape}"
        )
    t = mat.reshape(unfolded_shape)
    return np.transpose(t, np.argsort(order)).copy()


def khatri_rao(a, b):
    """Column-wise Kronecker product of ``M x K`` and ``N x K`` matrices."""
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"column-count mismatch: {a.shape[1]} vs {b.shape[1]}"
        )
    m, k = a.shape
    n = b.shape[0]
    return (a[:, None, :] * b[None, :, :]).reshape(m * n, k)


def hadamard(x, y):
    """Elementwise product of two tensors with identical dims."""
    x = check_tensor3(x, "x")
    y = check_tensor3(y, "y")
    check_same_shape(x, y)
    return x * y


def cp_construct(a, b, c):
    """Build the CP tensor with element (m,n,q) = sum_k a[m,k] b[n,k] c[q,k]."""
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    c = check_matrix(c, "c")
    check_matching_columns(a, b, c)
    return np.einsum("mk,nk,qk->mnq", a, b, c)


def concat(x, y, mode):
    """Stack two tensors along `mode`; the other dims must agree."""
    x = check_tensor3(x, "x")
    y = check_tensor3(y, "y")
    check_mode(mode)
    axis = mode - 1
    for ax in range(3):
        if ax != axis and x.shape[ax] != y.shape[ax]:
            raise ValueError(
                f"dims incompatible for mode-{mode} concatenation: "
                f"{x.shape} vs {y.shape}"
            )
    return np.concatenate([x, y], axis=axis)


def frob_norm(x):
    """Frobenius norm: sqrt of the sum of squared entry magnitudes."""
    x = check_tensor3(x) if np.ndim(x) == 3 else np.asarray(x, dtype=np.complex128)
    return float(np.linalg.norm(x.ravel()))
