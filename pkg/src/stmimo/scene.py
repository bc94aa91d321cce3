"""Radar geometry, pulse-to-pulse phase modulation, and random scenes.

Everything deterministic about the radar lives here (steering vectors, the
per-transmitter Doppler-division modulation matrix W and its tensor mask)
together with everything random about a single trial (target fading
coefficients, additive receiver noise).

Slow-time convention: pulse-to-pulse phases are expressed in cycles per
pulse, i.e. a physical Doppler of f Hz advances the phase by ``f / fa``
cycles each pulse. Target Dopplers are stored in the same normalized unit.
Angles are radians internally; degrees appear only at CLI boundaries.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .validation import check_tensor3


@dataclass(frozen=True)
class RadarConfig:
    """Array sizes, pulse counts and waveform timing.

    Parameters
    ----------
    m, n : int
        Transmit / receive element counts (half-wavelength ULAs).
    q : int
        Pulses per coherent processing interval; must be a multiple of `m`.
    fa_hz : float
        Pulse repetition frequency.
    t_s : float
        Chirp duration in seconds (fast time only).
    bandwidth_hz : float
        Chirp bandwidth.
    l : int, optional
        Fast-time snapshots per pulse. Defaults to ``round(bandwidth * t)``,
        i.e. one complex sample per 1/B.
    """

    m: int
    n: int
    q: int
    fa_hz: float = 50e3
    t_s: float = 10e-6
    bandwidth_hz: float = 40e6
    l: int = None

    def __post_init__(self):
        if min(self.m, self.n, self.q) < 1:
            raise ValueError("m, n and q must all be >= 1")
        if self.q % self.m != 0:
            raise ValueError(f"q ({self.q}) must be a multiple of m ({self.m})")
        if self.fa_hz <= 0 or self.t_s <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("fa_hz, t_s and bandwidth_hz must be positive")
        if self.l is None:
            object.__setattr__(self, "l", max(1, round(self.bandwidth_hz * self.t_s)))
        elif self.l < 1:
            raise ValueError("l must be >= 1")

    @property
    def pulses_per_channel(self):
        return self.q // self.m


@dataclass(frozen=True)
class TargetScene:
    """K targets: departure/arrival angles, normalized Doppler, fading.

    ``doppler`` is in cycles per pulse; ``rcs`` is the complex fading
    coefficient, fixed across one CPI.
    """

    dod: np.ndarray
    doa: np.ndarray
    doppler: np.ndarray
    rcs: np.ndarray

    def __post_init__(self):
        for name in ("dod", "doa", "doppler"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )
        object.__setattr__(
            self, "rcs", np.atleast_1d(np.asarray(self.rcs, dtype=np.complex128))
        )
        k = self.dod.size
        if not (self.doa.size == self.doppler.size == self.rcs.size == k):
            raise ValueError("dod, doa, doppler and rcs must have equal length")
        if k < 1:
            raise ValueError("a scene needs at least one target")
        for name in ("dod", "doa"):
            if np.any(np.abs(getattr(self, name)) >= np.pi / 2):
                raise ValueError(f"|{name}| must be < pi/2 radians")

    @property
    def n_targets(self):
        return self.dod.size


@dataclass(frozen=True)
class MaskTensor:
    """Unit-modulus phase-modulation mask.

    ``w`` is the M x Q generator matrix; ``tensor`` replicates it across the
    receive mode, so entry (m, n, q) equals ``w[m, q]`` for every n.
    """

    w: np.ndarray
    tensor: np.ndarray = field(repr=False)


def steering_vector(angle, count):
    """ULA steering vector: element i (1-based) is exp(-j (i-1) pi sin(angle))."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if abs(angle) >= np.pi / 2:
        raise ValueError("|angle| must be < pi/2 radians")
    return np.exp(-1j * np.pi * np.arange(count) * np.sin(angle))


def steering_matrix(angles, count):
    """Stack steering vectors for several angles as columns."""
    angles = np.atleast_1d(angles)
    return np.stack([steering_vector(a, count) for a in angles], axis=1)


def ddma_frequencies(m_count, fa_hz):
    """Per-transmitter Doppler offsets (fa/2) * (-1 + (2m-1)/M), m = 1..M.

    Uniformly spaced by fa/M and symmetric about zero.
    """
    if m_count < 1:
        raise ValueError("m_count must be >= 1")
    if fa_hz <= 0:
        raise ValueError("fa_hz must be positive")
    m = np.arange(1, m_count + 1)
    return (fa_hz / 2.0) * (-1.0 + (2.0 * m - 1.0) / m_count)


def ddma_matrix(cfg):
    """Phase modulation matrix W, M x Q with unit-modulus geometric rows.

    Entry (m, q) advances by ``f_m / fa`` cycles per pulse, q = 1..Q.
    """
    nu = ddma_frequencies(cfg.m, cfg.fa_hz) / cfg.fa_hz
    q = np.arange(1, cfg.q + 1)
    return np.exp(2j * np.pi * np.outer(nu, q))


def build_mask(cfg):
    """Expand W into the M x N x Q mask tensor (no receive dependence)."""
    w = ddma_matrix(cfg)
    tensor = np.ascontiguousarray(
        np.broadcast_to(w[:, None, :], (cfg.m, cfg.n, cfg.q))
    )
    return MaskTensor(w=w, tensor=tensor)


def mask_array(mask):
    """Accept a MaskTensor or a bare ndarray and return the mask tensor."""
    return check_tensor3(getattr(mask, "tensor", mask), "mask")


def sample_scene(
    n_targets,
    seed=None,
    dod=None,
    doa=None,
    doppler=None,
    dod_bounds=(-np.pi / 3, np.pi / 3),
    doa_bounds=(-np.pi / 3, np.pi / 3),
    doppler_bounds=(-0.05, 0.05),
):
    """Draw a Swerling-I scene: fading is CN(0, 1) per target per CPI.

    Angles and Dopplers are taken verbatim when supplied, otherwise drawn
    uniformly within the given bounds. Deterministic under a fixed seed.
    """
    if n_targets < 1:
        raise ValueError("n_targets must be >= 1")
    rng = np.random.default_rng(seed)
    if dod is None:
        dod = rng.uniform(*dod_bounds, size=n_targets)
    if doa is None:
        doa = rng.uniform(*doa_bounds, size=n_targets)
    if doppler is None:
        doppler = rng.uniform(*doppler_bounds, size=n_targets)
    rcs = (rng.standard_normal(n_targets) + 1j * rng.standard_normal(n_targets)) / np.sqrt(2.0)
    return TargetScene(dod=dod, doa=doa, doppler=doppler, rcs=rcs)


def add_noise(t, snr_db, seed=None):
    """Add circular complex Gaussian noise at the given per-element SNR.

    The SNR reference is the mean squared entry magnitude of the signal
    tensor; ``snr_db=None`` or ``+inf`` returns the input unchanged.
    Deterministic under a fixed seed.
    """
    t = np.asarray(t, dtype=np.complex128)
    if snr_db is None or snr_db == np.inf:
        return t.copy()
    rng = np.random.default_rng(seed)
    p_signal = float(np.mean(np.abs(t) ** 2))
    sigma2 = p_signal / (10.0 ** (snr_db / 10.0))
    scale = np.sqrt(sigma2 / 2.0)
    noise = scale * (
        rng.standard_normal(t.shape) + 1j * rng.standard_normal(t.shape)
    )
    return t + noise


def _warn_doppler_ambiguity(scene, cfg):
    """Targets beyond half the per-channel Doppler band alias after filtering."""
    bound = 1.0 / (2.0 * cfg.m)
    if np.any(np.abs(scene.doppler) >= bound):
        warnings.warn(
            f"target Doppler exceeds the unambiguous band +-{bound:.4g} "
            "cycles/pulse for this transmit count; per-channel separation "
            "will alias",
            RuntimeWarning,
            stacklevel=3,
        )
