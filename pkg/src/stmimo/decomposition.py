"""CP/PARAFAC fitting by alternating least squares, with support for a
fixed elementwise phase mask.

Two solver paths exist for the masked problem ``min ||Y - cp(A,B,C) * D||_F``:

* unit-modulus masks (the only kind the radar model produces) reduce exactly
  to standard ALS on the demodulated tensor, because
  ``||Y - X * D|| == ||Y * conj(D) - X||`` elementwise whenever ``|D| == 1``;
* general nonzero masks are handled by per-row weighted least squares
  (``force_general=True`` routes unit-modulus masks here too, which is used
  by the test suite to cross-check the reduction).

Masks with zero entries are rejected.

Every alternating step solves its linear subproblem exactly (SVD-based
least squares), so the recorded residual history is non-increasing up to
rounding.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .tensor_ops import cp_construct, frob_norm, hadamard, unfold
from .validation import check_tensor3

_UNIT_MODULUS_TOL = 1e-12
_LSTSQ_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class AlsOptions:
    """Iteration budget, stopping rule and initialization for ALS."""

    max_iters: int = 500
    rel_tol: float = 1e-8
    restarts: int = 3
    init: str = "random"  # "random" or "svd-based"
    seed: object = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.init not in ("random", "svd-based"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class FactorSet:
    """Factor matrices plus convergence diagnostics of one ALS run.

    ``fit`` is the final relative residual ``||Y - model||_F / ||Y||_F``
    (in the masked metric when a mask was supplied). ``residual_history``
    holds one entry per sweep and is non-increasing within rounding.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    fit: float
    n_iter: int
    residual_history: np.ndarray
    converged: bool
    swamp: bool = False
    degenerate_columns: tuple = field(default_factory=tuple)

    @property
    def rank(self):
        return self.a.shape[1]


def _random_factors(shape, rank, rng):
    return [
        (rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank)))
        / np.sqrt(2.0)
        for d in shape
    ]


def _svd_factors(t, rank, rng):
    """Leading singular vectors of each unfolding, padded randomly if short."""
    factors = []
    for mode in (1, 2, 3):
        mat = unfold(t, mode).T  # d_mode x (other dims)
        u, _, _ = np.linalg.svd(mat, full_matrices=False)
        f = u[:, :rank]
        if f.shape[1] < rank:
            extra = _random_factors((mat.shape[0],), rank - f.shape[1], rng)[0]
            f = np.concatenate([f, extra], axis=1)
        factors.append(f.astype(np.complex128))
    return factors


def _rebalance(a, b, c):
    """Push column scales of A and B into C; model tensor unchanged."""
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    sa = np.where(na > 0, na, 1.0)
    sb = np.where(nb > 0, nb, 1.0)
    return a / sa, b / sb, c * (sa * sb)


def _max_cond(*mats):
    worst = 1.0
    for m in mats:
        s = np.linalg.svd(m, compute_uv=False)
        if s[-1] <= 0:
            return np.inf
        worst = max(worst, s[0] / s[-1])
    return worst


def _kr(a, b):
    """Khatri-Rao without boundary validation (hot loop)."""
    m, k = a.shape
    return (a[:, None, :] * b[None, :, :]).reshape(m * b.shape[0], k)


def _solve_factor(g, t_unf):
    """Least-squares factor update: minimize ||t_unf - g @ X^T|| over X."""
    x, _, _, _ = np.linalg.lstsq(g, t_unf, rcond=max(g.shape) * _LSTSQ_EPS)
    return x.T


def _als_sweeps(unfoldings, factors, opts, norm_t):
    """Run alternating sweeps from `factors`.

    The residual recorded per sweep is evaluated at the mode-3 unfolding
    right after the C update (the rebalancing that follows preserves the
    model tensor exactly). Returns (factors, history, converged).
    """
    t1, t2, t3 = unfoldings
    a, b, c = factors
    history = []
    converged = False
    for _ in range(opts.max_iters):
        a = _solve_factor(_kr(b, c), t1)
        b = _solve_factor(_kr(c, a), t2)
        g = _kr(a, b)
        c = _solve_factor(g, t3)
        history.append(float(np.linalg.norm(t3 - g @ c.T) / norm_t))
        a, b, c = _rebalance(a, b, c)
        if len(history) > 1 and abs(history[-2] - history[-1]) < opts.rel_tol:
            converged = True
            break
    return (a, b, c), np.asarray(history), converged


def _weighted_row_solve(g, dm, tm):
    """Solve each factor row's own weighted LS: row i minimizes
    ||tm[:, i] - diag(dm[:, i]) @ g @ x||."""
    new = np.empty((tm.shape[1], g.shape[1]), dtype=np.complex128)
    for i in range(tm.shape[1]):
        design = dm[:, i, None] * g
        x, _, _, _ = np.linalg.lstsq(
            design, tm[:, i], rcond=max(design.shape) * _LSTSQ_EPS
        )
        new[i] = x
    return new


def _weighted_sweeps(t, mask, factors, opts):
    """General masked path: each factor row solves its own weighted LS."""
    unfold_t = [unfold(t, m) for m in (1, 2, 3)]
    unfold_d = [unfold(mask, m) for m in (1, 2, 3)]
    norm_t = frob_norm(t)

    a, b, c = factors
    history = []
    converged = False
    for _ in range(opts.max_iters):
        a = _weighted_row_solve(_kr(b, c), unfold_d[0], unfold_t[0])
        b = _weighted_row_solve(_kr(c, a), unfold_d[1], unfold_t[1])
        g = _kr(a, b)
        c = _weighted_row_solve(g, unfold_d[2], unfold_t[2])
        history.append(float(
            np.linalg.norm(unfold_t[2] - unfold_d[2] * (g @ c.T)) / norm_t
        ))
        a, b, c = _rebalance(a, b, c)
        if len(history) > 1 and abs(history[-2] - history[-1]) < opts.rel_tol:
            converged = True
            break
    return (a, b, c), np.asarray(history), converged


def _identifiability_guard(shape, rank):
    d1, d2, d3 = shape
    bound = min(d1 * d2, d1 * d3, d2 * d3)
    if rank > bound:
        raise ValueError(
            f"rank {rank} exceeds min of pairwise dimension products "
            f"({bound}); the CP model is not identifiable"
        )


def _zero_factor_set(shape, rank):
    a, b, c = (np.zeros((d, rank), dtype=np.complex128) for d in shape)
    return FactorSet(
        a=a, b=b, c=c, fit=0.0, n_iter=0,
        residual_history=np.asarray([0.0]), converged=True,
    )


def _run_restarts(t, rank, opts, init_factors, sweep):
    """Dispatch restarts, keep the best run by final fit."""
    if init_factors is not None:
        inits = [tuple(np.asarray(f, dtype=np.complex128).copy() for f in init_factors)]
    else:
        rng_master = np.random.default_rng(opts.seed)
        inits = []
        for r in range(opts.restarts):
            rng = np.random.default_rng(rng_master.integers(2**63))
            if opts.init == "svd-based" and r == 0:
                inits.append(tuple(_svd_factors(t, rank, rng)))
            else:
                inits.append(tuple(_random_factors(t.shape, rank, rng)))

    best = None
    for factors in inits:
        (a, b, c), history, converged = sweep(factors)
        if best is None or history[-1] < best[1][-1]:
            best = ((a, b, c), history, converged)
    (a, b, c), history, converged = best
    fs = FactorSet(
        a=a, b=b, c=c,
        fit=float(history[-1]),
        n_iter=len(history),
        residual_history=history,
        converged=converged,
        swamp=bool(_max_cond(a, b, c) > 1e8),
    )
    return normalize_factors(fs)


def als_standard(t, rank, opts=None, init_factors=None):
    """Fit a rank-`rank` CP model to `t` by alternating least squares.

    Each sweep solves the three mode-wise linear problems exactly; the best
    of ``opts.restarts`` random starts is returned. ``init_factors`` bypasses
    the restart loop and starts from the given ``(A, B, C)``.
    """
    t = check_tensor3(t)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    _identifiability_guard(t.shape, rank)
    opts = opts or AlsOptions()

    norm_t = frob_norm(t)
    if norm_t == 0.0:
        return _zero_factor_set(t.shape, rank)

    unfoldings = [unfold(t, m) for m in (1, 2, 3)]

    def sweep(factors):
        return _als_sweeps(unfoldings, factors, opts, norm_t)

    return _run_restarts(t, rank, opts, init_factors, sweep)


def als_masked(t, mask, rank, opts=None, init_factors=None, force_general=False):
    """Fit a CP model under a fixed elementwise mask.

    Minimizes ``||t - cp(A,B,C) * mask||_F``. Unit-modulus masks are solved
    by demodulation (standard ALS on ``t * conj(mask)``), which yields
    identical iterates; other nonzero masks use per-row weighted least
    squares. The reported residuals are always in the masked metric.
    """
    t = check_tensor3(t)
    mask = check_tensor3(getattr(mask, "tensor", mask), "mask")
    if t.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} != tensor shape {t.shape}")
    mags = np.abs(mask)
    if np.any(mags == 0.0):
        raise ValueError("mask entries must be nonzero")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    _identifiability_guard(t.shape, rank)
    opts = opts or AlsOptions()

    norm_t = frob_norm(t)
    if norm_t == 0.0:
        return _zero_factor_set(t.shape, rank)

    unit_modulus = np.max(np.abs(mags - 1.0)) <= _UNIT_MODULUS_TOL
    if unit_modulus and not force_general:
        demod = hadamard(t, np.conj(mask))
        # |mask| == 1 makes the demodulated metric equal the masked metric,
        # so the standard-path history is already the masked objective.
        return als_standard(demod, rank, opts, init_factors=init_factors)

    def sweep(factors):
        return _weighted_sweeps(t, mask, factors, opts)

    return _run_restarts(t, rank, opts, init_factors, sweep)


def normalize_factors(fs):
    """Resolve the CP scaling indeterminacy.

    Columns of A and B become unit norm with their first nonzero entry
    rotated to the positive real axis; the compensating scales and phases
    fold into C. The model tensor is unchanged. Zero columns are left
    untouched and reported in ``degenerate_columns``.
    """
    a, b, c = fs.a.copy(), fs.b.copy(), fs.c.copy()
    degenerate = []
    for k in range(a.shape[1]):
        scale = 1.0 + 0.0j
        ok = True
        for mat in (a, b):
            col = mat[:, k]
            nrm = np.linalg.norm(col)
            if nrm == 0.0:
                ok = False
                continue
            nz = col[np.flatnonzero(np.abs(col) > 0)[0]]
            phase = nz / abs(nz)
            mat[:, k] = col / (nrm * phase)
            scale *= nrm * phase
        if ok:
            c[:, k] = c[:, k] * scale
        else:
            degenerate.append(k)
    return replace(
        fs, a=a, b=b, c=c, degenerate_columns=tuple(degenerate)
    )


class MaskedParafac(BaseEstimator):
    """CP decomposition estimator with an optional fixed elementwise mask.

    A thin scikit-learn wrapper around :func:`als_standard` /
    :func:`als_masked`: configure through ``__init__``, call ``fit`` on a
    3-way complex tensor, read the results from trailing-underscore
    attributes. ``get_params``/``set_params`` come from ``BaseEstimator``,
    so the class composes with scikit-learn tooling (``clone`` etc.).

    Attributes (after fit)
    ----------------------
    factors_ : FactorSet
    a_, b_, c_ : ndarray
        The factor matrices, columns normalized, scale absorbed into ``c_``.
    fit_residual_ : float
    n_iter_ : int
    residual_history_ : ndarray
    converged_ : bool
    """

    def __init__(self, rank=1, max_iter=500, tol=1e-8, n_restarts=3,
                 init="random", random_state=None):
        self.rank = rank
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.init = init
        self.random_state = random_state

    def _options(self):
        return AlsOptions(
            max_iters=self.max_iter,
            rel_tol=self.tol,
            restarts=self.n_restarts,
            init=self.init,
            seed=self.random_state,
        )

    def fit(self, X, mask=None):
        """Fit the CP model to tensor `X`, optionally under `mask`."""
        start = time.perf_counter()
        if mask is None:
            fs = als_standard(X, self.rank, self._options())
        else:
            fs = als_masked(X, mask, self.rank, self._options())
        self.factors_ = fs
        self.a_, self.b_, self.c_ = fs.a, fs.b, fs.c
        self.fit_residual_ = fs.fit
        self.n_iter_ = fs.n_iter
        self.residual_history_ = fs.residual_history
        self.converged_ = fs.converged
        self.fit_time_ = time.perf_counter() - start
        return self

    def reconstruct(self):
        """Model tensor of the fitted decomposition."""
        return cp_construct(self.a_, self.b_, self.c_)
