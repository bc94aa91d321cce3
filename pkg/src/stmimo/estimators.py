"""Joint DOD/DOA estimators for the slow-time MIMO tensor model.

Three methods share the vocabulary used at the CLI boundary:

* ``proposed``       - masked CP decomposition of the transmit- and
                       receive-augmented full-CPI tensors, angles from the
                       shift invariance of the stacked subarray factors;
* ``parafac_small``  - standard CP decomposition of the decimated
                       per-channel tensor, shift invariance inside each
                       steering factor;
* ``esprit``         - least-squares ESPRIT on the matricized decimated
                       tensor, transmit/receive invariances of the
                       Khatri-Rao steering structure, paired by reusing the
                       first rotation's eigenvectors.

Angles are radians; a rotation eigenvalue ``lam = e^{-j pi sin(angle)}``
maps back through ``arcsin(-phase(lam) / pi)``.
"""

import time
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from .decomposition import AlsOptions, als_masked, als_standard
from .linalg import eig, pinv
from .scene import MaskTensor, mask_array
from .tensor_ops import concat, unfold
from .validation import check_matrix, check_tensor3

METHODS = ("proposed", "parafac_small", "esprit")

_PAIRING_ATOL = 1e-6


@dataclass
class EstimationResult:
    """Paired angle estimates with per-run diagnostics.

    ``dod[i]`` pairs with ``doa[i]``; pairs are sorted by DOD. ``gamma_tx``
    and ``gamma_rx`` hold the raw rotation eigenvalues (aligned with the
    pairs). ``diagnostics`` carries per-run fit/iteration info; ``flags``
    lists anomalies (non-convergence, clamped eigenvalues, pairing
    ambiguity).
    """

    dod: np.ndarray
    doa: np.ndarray
    method: str
    gamma_tx: np.ndarray = None
    gamma_rx: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def pairs(self):
        return list(zip(self.dod.tolist(), self.doa.tolist()))

    @property
    def n_targets(self):
        return self.dod.size


class UniquenessReport(NamedTuple):
    satisfied: bool
    max_rank: int
    pairwise_bound: int
    within_pairwise_bound: bool


def uniqueness_check(m, n, q, k):
    """Identifiability bound min(M,K)+min(N,K)+min(Q,K) >= 2K+2.

    ``satisfied`` evaluates that inequality literally for `k`; ``max_rank``
    is the largest rank satisfying it for these dimensions. The report also
    carries the looser K <= min(MN, MQ, NQ) restatement (which admits ranks
    up to the boundary K = MN when Q >= MN).
    """
    if min(m, n, q) < 1 or k < 1:
        raise ValueError("dimensions and k must be positive")

    def holds(kk):
        return min(m, kk) + min(n, kk) + min(q, kk) >= 2 * kk + 2

    max_rank = 0
    for kk in range(1, (m + n + q) // 2 + 2):
        if holds(kk):
            max_rank = kk
    pairwise = min(m * n, m * q, n * q)
    return UniquenessReport(
        satisfied=bool(holds(k)),
        max_rank=max_rank,
        pairwise_bound=pairwise,
        within_pairwise_bound=bool(k <= pairwise),
    )


def build_transmit_augmented(y, mask):
    """Stack the sub-tensor without the last transmit slice atop the one
    without the first, along mode 1, with the matching sub-mask.

    Output mode-1 slices i and i+(M-1) originate from transmit elements i
    and i+1, so the stacked factor halves obey the shift-invariance
    rotation.
    """
    y = check_tensor3(y, "y")
    d = mask_array(mask)
    if y.shape != d.shape:
        raise ValueError(f"mask shape {d.shape} != tensor shape {y.shape}")
    if y.shape[0] < 2:
        raise ValueError("transmit augmentation needs M >= 2")
    y_a = concat(y[:-1], y[1:], mode=1)
    d_a = concat(d[:-1], d[1:], mode=1)
    return y_a, MaskTensor(w=d_a[:, 0, :].copy(), tensor=d_a)


def build_receive_augmented(y, mask):
    """Analogous stacking along mode 2 (receive subarrays); the companion
    mask simply replicates across the doubled receive rows."""
    y = check_tensor3(y, "y")
    d = mask_array(mask)
    if y.shape != d.shape:
        raise ValueError(f"mask shape {d.shape} != tensor shape {y.shape}")
    if y.shape[1] < 2:
        raise ValueError("receive augmentation needs N >= 2")
    y_b = concat(y[:, :-1], y[:, 1:], mode=2)
    d_b = concat(d[:, :-1], d[:, 1:], mode=2)
    return y_b, MaskTensor(w=d_b[:, 0, :].copy(), tensor=d_b)


def _greedy_unique_assignment(score):
    """Assign each column j of `score` to a distinct row, largest first.

    Returns (owner such that owner[j] is the row taken by column j, tie
    flag). The tie flag is set when, at any decision, a rival entry in the
    chosen row or column comes within _PAIRING_ATOL of the winner.
    """
    work = np.array(score, dtype=float)
    owner = np.full(work.shape[1], -1, dtype=int)
    ambiguous = False
    for _ in range(min(work.shape)):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        rivals = np.concatenate([np.delete(work[i, :], j), np.delete(work[:, j], i)])
        rivals = rivals[np.isfinite(rivals)]
        if rivals.size and abs(work[i, j] - rivals.max()) < _PAIRING_ATOL:
            ambiguous = True
        owner[j] = i
        work[i, :] = -np.inf
        work[:, j] = -np.inf
    return owner, ambiguous


def _angles_by_column(f0):
    """Rotation eigen-analysis of a stacked factor, mapped back to columns.

    Splits `f0` (2P x K) into halves F1, F2, eigendecomposes pinv(F1) @ F2
    and associates each eigenvalue with the factor column dominating its
    eigenvector (the eigenvector matrix is an inverse scaled permutation of
    the column basis). Returns (angles per column, eigenvalues per column,
    clamped flag).
    """
    f0 = check_matrix(f0, "stacked factor")
    rows, k = f0.shape
    if rows % 2 != 0:
        raise ValueError("stacked factor must have an even row count")
    p = rows // 2
    if p < k:
        raise ValueError(
            f"subarray rows ({p}) fewer than columns ({k}); the rotation "
            "least-squares problem is underdetermined"
        )
    rotation = pinv(f0[:p]) @ f0[p:]
    res = eig(rotation)
    col_of_eig, _ = _greedy_unique_assignment(np.abs(res.eigenvectors))
    lam = np.empty(k, dtype=np.complex128)
    lam[col_of_eig] = res.eigenvalues
    sines = -np.angle(lam) / np.pi
    clamped = bool(np.any(np.abs(sines) > 1.0))
    return np.arcsin(np.clip(sines, -1.0, 1.0)), lam, clamped


def angles_from_stacked_factor(f0):
    """Angles encoded in a vertically stacked pair of shifted subarray
    factors, sorted ascending (radians)."""
    angles, _, _ = _angles_by_column(f0)
    return np.sort(angles)


def pair_angles(dod, c_tx, doa, c_rx):
    """Match transmit-run columns to receive-run columns through their
    shared Doppler/fading signatures (the C factors).

    Greedy largest-first assignment on the normalized column correlation
    magnitudes; two competing correlations within 1e-6 at decision time
    raise the ambiguity flag. Returns (dod, doa reordered to pair with dod,
    rx_of_tx permutation, ambiguous).
    """
    dod = np.asarray(dod, dtype=float)
    doa = np.asarray(doa, dtype=float)
    c_tx = check_matrix(c_tx, "c_tx")
    c_rx = check_matrix(c_rx, "c_rx")
    if not (dod.size == doa.size == c_tx.shape[1] == c_rx.shape[1]):
        raise ValueError("both runs must expose the same number of columns")
    tn = c_tx / np.linalg.norm(c_tx, axis=0, keepdims=True)
    rn = c_rx / np.linalg.norm(c_rx, axis=0, keepdims=True)
    corr = np.abs(tn.conj().T @ rn)  # [tx column, rx column]
    rx_of_tx, ambiguous = _greedy_unique_assignment(corr.T)
    return dod, doa[rx_of_tx], rx_of_tx, ambiguous


def _resolve_als_seeds(opts):
    """Derive independent seeds for the two decomposition runs."""
    if isinstance(opts.seed, np.random.SeedSequence):
        ss = opts.seed
    elif isinstance(opts.seed, np.random.Generator):
        ss = np.random.SeedSequence(int(opts.seed.integers(2**63)))
    else:
        ss = np.random.SeedSequence(opts.seed)
    tx_ss, rx_ss = ss.spawn(2)
    return (
        AlsOptions(opts.max_iters, opts.rel_tol, opts.restarts, opts.init, tx_ss),
        AlsOptions(opts.max_iters, opts.rel_tol, opts.restarts, opts.init, rx_ss),
    )


def _warn_uniqueness(m, n, q, k):
    # The bound is formally violated at K=1 although rank-1 models are
    # unique; warn only for multi-target scenes.
    if k >= 2 and not uniqueness_check(m, n, q, k).satisfied:
        warnings.warn(
            f"identifiability bound violated for K={k} on a "
            f"{m}x{n}x{q} tensor; estimates may not be unique",
            RuntimeWarning,
            stacklevel=3,
        )


def _sorted_by_dod(dod, doa, gtx=None, grx=None):
    order = np.argsort(dod)
    return (
        dod[order],
        doa[order],
        None if gtx is None else gtx[order],
        None if grx is None else grx[order],
    )


def estimate_proposed(y, mask, k, opts=None):
    """Masked-decomposition angle estimator on the full-CPI tensor.

    Runs the masked ALS on the transmit-augmented tensor (DODs from the
    stacked mode-1 factor) and on the receive-augmented tensor (DOAs from
    the stacked mode-2 factor), then pairs the two angle sets through the
    correlation of their Doppler/fading factors.
    """
    start = time.perf_counter()
    y = check_tensor3(y, "y")
    opts = opts or AlsOptions()
    _warn_uniqueness(2 * (y.shape[0] - 1), y.shape[1], y.shape[2], k)
    opts_tx, opts_rx = _resolve_als_seeds(opts)

    y_a, d_a = build_transmit_augmented(y, mask)
    fs_tx = als_masked(y_a, d_a, k, opts_tx)
    dod, gamma_tx, clamp_tx = _angles_by_column(fs_tx.a)

    y_b, d_b = build_receive_augmented(y, mask)
    fs_rx = als_masked(y_b, d_b, k, opts_rx)
    doa, gamma_rx, clamp_rx = _angles_by_column(fs_rx.b)

    dod, doa, rx_of_tx, ambiguous = pair_angles(dod, fs_tx.c, doa, fs_rx.c)
    gamma_rx = gamma_rx[rx_of_tx]

    flags = []
    if clamp_tx or clamp_rx:
        flags.append("clamped_eigenvalue")
    if ambiguous:
        flags.append("pairing_ambiguous")
    for tag, fs in (("tx", fs_tx), ("rx", fs_rx)):
        if not fs.converged and fs.fit > 0.5:
            flags.append(f"non_convergence_{tag}")

    dod, doa, gamma_tx, gamma_rx = _sorted_by_dod(dod, doa, gamma_tx, gamma_rx)
    return EstimationResult(
        dod=dod,
        doa=doa,
        method="proposed",
        gamma_tx=gamma_tx,
        gamma_rx=gamma_rx,
        diagnostics={
            "tx": {"fit": fs_tx.fit, "n_iter": fs_tx.n_iter, "swamp": fs_tx.swamp},
            "rx": {"fit": fs_rx.fit, "n_iter": fs_rx.n_iter, "swamp": fs_rx.swamp},
        },
        flags=flags,
        elapsed_s=time.perf_counter() - start,
    )


def baseline_parafac_small(y_small, k, opts=None):
    """Standard CP decomposition of the decimated per-channel tensor.

    DODs come from shift invariance inside the transmit factor (rows 1..M-1
    versus 2..M of the same matrix), DOAs likewise from the receive factor;
    pairing is free since both live in one decomposition.
    """
    start = time.perf_counter()
    y_small = check_tensor3(y_small, "y_small")
    opts = opts or AlsOptions()
    _warn_uniqueness(*y_small.shape, k)
    fs = als_standard(y_small, k, opts)

    dod, gamma_tx, clamp_tx = _angles_by_column(
        np.vstack([fs.a[:-1], fs.a[1:]])
    )
    doa, gamma_rx, clamp_rx = _angles_by_column(
        np.vstack([fs.b[:-1], fs.b[1:]])
    )
    flags = []
    if clamp_tx or clamp_rx:
        flags.append("clamped_eigenvalue")
    if not fs.converged and fs.fit > 0.5:
        flags.append("non_convergence")

    dod, doa, gamma_tx, gamma_rx = _sorted_by_dod(dod, doa, gamma_tx, gamma_rx)
    return EstimationResult(
        dod=dod,
        doa=doa,
        method="parafac_small",
        gamma_tx=gamma_tx,
        gamma_rx=gamma_rx,
        diagnostics={"fit": fs.fit, "n_iter": fs.n_iter, "swamp": fs.swamp},
        flags=flags,
        elapsed_s=time.perf_counter() - start,
    )


def baseline_esprit(y_small, k):
    """Least-squares ESPRIT on the matricized decimated tensor.

    The K dominant left singular vectors of the MN x (Q/M) snapshot matrix
    span the Khatri-Rao steering structure; transmit and receive shift
    invariances give two rotation operators sharing one similarity
    transform, so diagonalizing the second with the first one's
    eigenvectors pairs the angles.
    """
    start = time.perf_counter()
    y_small = check_tensor3(y_small, "y_small")
    m, n, qm = y_small.shape
    if k >= m * n:
        raise ValueError(f"esprit requires K < M*N ({k} >= {m * n})")
    if qm < k:
        raise ValueError(f"fewer snapshots ({qm}) than targets ({k})")
    if m < 2 or n < 2:
        raise ValueError("esprit needs M >= 2 and N >= 2")

    x = unfold(y_small, 3)  # MN x Q/M, row (m-1)N + n
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    if s[k - 1] <= s[0] * np.finfo(float).eps * max(x.shape):
        raise RuntimeError("signal subspace collapse: too few distinct targets")
    es = u[:, :k]

    # Transmit invariance: drop the last / first transmit block of rows.
    psi_tx = pinv(es[: (m - 1) * n]) @ es[n:]
    # Receive invariance: drop the last / first receive row inside blocks.
    rows = np.arange(m * n)
    keep_low = rows[rows % n != n - 1]
    keep_high = rows[rows % n != 0]
    psi_rx = pinv(es[keep_low]) @ es[keep_high]

    res = eig(psi_tx)
    lam_tx = res.eigenvalues
    v = res.eigenvectors
    lam_rx = np.diag(np.linalg.solve(v, psi_rx @ v))

    sines_tx = -np.angle(lam_tx) / np.pi
    sines_rx = -np.angle(lam_rx) / np.pi
    clamped = bool(np.any(np.abs(np.concatenate([sines_tx, sines_rx])) > 1.0))
    dod = np.arcsin(np.clip(sines_tx, -1.0, 1.0))
    doa = np.arcsin(np.clip(sines_rx, -1.0, 1.0))

    dod, doa, lam_tx, lam_rx = _sorted_by_dod(dod, doa, lam_tx, lam_rx)
    return EstimationResult(
        dod=dod,
        doa=doa,
        method="esprit",
        gamma_tx=lam_tx,
        gamma_rx=lam_rx,
        diagnostics={"singular_values": s},
        flags=["clamped_eigenvalue"] if clamped else [],
        elapsed_s=time.perf_counter() - start,
    )


class AngleEstimator(BaseEstimator):
    """scikit-learn-style front door to the three angle estimators.

    Parameters mirror :class:`~stmimo.decomposition.MaskedParafac` where
    applicable. ``fit`` expects the full-CPI tensor plus its modulation mask
    for ``method='proposed'``, and the decimated per-channel tensor for the
    two baselines.

    Attributes (after fit): ``dod_``, ``doa_`` (radians, paired and sorted
    by DOD), ``pairs_`` and the full ``result_``.
    """

    def __init__(self, n_targets=1, method="proposed", max_iter=500,
                 tol=1e-8, n_restarts=3, init="random", random_state=None):
        self.n_targets = n_targets
        self.method = method
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
        if self.method not in METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; expected one of {METHODS}"
            )
        if self.method == "proposed":
            if mask is None:
                raise ValueError("method 'proposed' requires the modulation mask")
            result = estimate_proposed(X, mask, self.n_targets, self._options())
        elif self.method == "parafac_small":
            result = baseline_parafac_small(X, self.n_targets, self._options())
        else:
            result = baseline_esprit(X, self.n_targets)
        self.result_ = result
        self.dod_ = result.dod
        self.doa_ = result.doa
        self.pairs_ = result.pairs
        return self
