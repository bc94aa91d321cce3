"""Fast-time synthesis and the per-transmitter separation chain.

The physical simulation path runs

    synthesize_fast_time -> matched_filter -> (range_doppler_map)
        -> demodulate_decimate -> interpolate_restore

and ends in the same M x N x Q tensor that :func:`direct_synthesis` builds
in one step; the direct route is the fast path for Monte Carlo work, the
chain exists to validate it and to produce range-Doppler maps.

Pulse cubes are indexed ``(receive element, pulse, fast-time sample)``.
The per-transmitter low-pass is an ideal DFT-bin mask over the CPI with
passband half-width ``fa / (2M)``; decimation is performed in the DFT
domain so it is alias-free by construction.
"""

import numpy as np
from scipy.signal import resample as _fft_resample

from .scene import (
    _warn_doppler_ambiguity,
    add_noise,
    build_mask,
    ddma_frequencies,
    steering_matrix,
)
from .tensor_ops import cp_construct, hadamard
from .validation import check_tensor3


def chirp(cfg):
    """Baseband LFM reference of length L, sweeping the full bandwidth."""
    t = np.arange(cfg.l) / cfg.bandwidth_hz
    rate = cfg.bandwidth_hz / cfg.t_s
    return np.exp(1j * np.pi * rate * (t - cfg.t_s / 2.0) ** 2)


def _slow_time_gains(scene, cfg):
    """Complex gain of each (n, q) snapshot: the sum over targets and
    transmitters of rcs * beta_n * alpha_m * e^{j2pi(nu_k + nu_m) q}."""
    a = steering_matrix(scene.dod, cfg.m)  # M x K
    b = steering_matrix(scene.doa, cfg.n)  # N x K
    nu_m = ddma_frequencies(cfg.m, cfg.fa_hz) / cfg.fa_hz
    q = np.arange(1, cfg.q + 1)
    # tones[k, m, q]
    tones = np.exp(2j * np.pi * (scene.doppler[:, None, None] + nu_m[None, :, None]) * q)
    per_target = np.einsum("mk,kmq->kq", a, tones)  # sum over transmitters
    return np.einsum("k,nk,kq->nq", scene.rcs, b, per_target)


def synthesize_fast_time(scene, cfg, seed=None, snr_db=None, delays=None):
    """Simulate the raw fast-time pulse cube, shape (N, Q, n_fast).

    ``delays`` optionally shifts each target's chirp by an integer number of
    fast-time samples (distinct range cells); the window grows to fit. With
    ``snr_db=None`` the cube is noiseless.
    """
    _warn_doppler_ambiguity(scene, cfg)
    u = chirp(cfg)
    if delays is None:
        delays = np.zeros(scene.n_targets, dtype=int)
    delays = np.asarray(delays, dtype=int)
    if delays.size != scene.n_targets or np.any(delays < 0):
        raise ValueError("delays must give one nonnegative shift per target")
    n_fast = cfg.l + int(delays.max())

    cube = np.zeros((cfg.n, cfg.q, n_fast), dtype=np.complex128)
    nu_m = ddma_frequencies(cfg.m, cfg.fa_hz) / cfg.fa_hz
    b = steering_matrix(scene.doa, cfg.n)
    a = steering_matrix(scene.dod, cfg.m)
    q = np.arange(1, cfg.q + 1)
    for k in range(scene.n_targets):
        tones = np.exp(2j * np.pi * (scene.doppler[k] + nu_m)[:, None] * q)  # M x Q
        gain_q = a[:, k] @ tones  # sum over m -> length Q
        gains = scene.rcs[k] * np.outer(b[:, k], gain_q)  # N x Q
        d = delays[k]
        cube[:, :, d:d + cfg.l] += gains[:, :, None] * u[None, None, :]
    return add_noise(cube, snr_db, seed)


def matched_filter(cube, cfg):
    """Correlate every snapshot with the chirp (circular, via FFT).

    Raw correlation: feeding the chirp itself yields a peak of ||u||^2 at
    zero lag; a target delayed by d samples peaks at range cell d.
    """
    cube = check_tensor3(cube, "cube")
    u = chirp(cfg)
    n_fast = cube.shape[2]
    if n_fast < cfg.l:
        raise ValueError("cube fast-time axis shorter than the chirp")
    uf = np.fft.fft(u, n_fast)
    return np.fft.ifft(np.fft.fft(cube, axis=2) * np.conj(uf)[None, None, :], axis=2)


def range_doppler_map(cube):
    """Slow-time FFT per range cell; shape (N, Q, n_fast).

    Doppler bin b corresponds to ``b * fa / Q`` Hz modulo ``fa``. For a
    single target, the slice at its range cell shows one dominant peak per
    transmit element, adjacent peaks separated by ``fa / M``.
    """
    cube = check_tensor3(cube, "cube")
    return np.fft.fft(cube, axis=1)


def dominant_doppler_peaks(doppler_slice, rel_threshold_db=-20.0):
    """Indices of circular local maxima within `rel_threshold_db` of the top.

    Operates on one magnitude spectrum (length Q); returns sorted bins.
    """
    mag = np.abs(np.asarray(doppler_slice))
    if mag.ndim != 1:
        raise ValueError("expected a 1-D Doppler slice")
    floor = mag.max() * 10.0 ** (rel_threshold_db / 20.0)
    left = np.roll(mag, 1)
    right = np.roll(mag, -1)
    peaks = np.flatnonzero((mag >= floor) & (mag >= left) & (mag > right))
    return peaks


def detect_range_gate(cube):
    """Range cell with the largest total power across elements and pulses."""
    cube = check_tensor3(cube, "cube")
    power = np.sum(np.abs(cube) ** 2, axis=(0, 1))
    return int(np.argmax(power))


def demodulate_decimate(cube, cfg, gate=None):
    """Separate transmit channels at one range cell, shape (M, N, Q/M).

    For each transmitter: demodulate the gated slow-time series by that
    transmitter's pulse-to-pulse phase, apply the ideal low-pass (DFT-bin
    mask, passband half-width fa/(2M)) and decimate by M. The gated series
    is calibrated by the chirp energy so a noiseless single target matches
    the decimated CP model at unit scale. ``gate`` defaults to the strongest
    range cell.
    """
    cube = check_tensor3(cube, "cube")
    n_el, n_pulses, _ = cube.shape
    if n_el != cfg.n or n_pulses != cfg.q:
        raise ValueError(
            f"cube shape {cube.shape} inconsistent with config "
            f"(N={cfg.n}, Q={cfg.q})"
        )
    if gate is None:
        gate = detect_range_gate(cube)
    u = chirp(cfg)
    gated = cube[:, :, gate] / np.vdot(u, u).real  # N x Q

    qm = cfg.pulses_per_channel
    nu_m = ddma_frequencies(cfg.m, cfg.fa_hz) / cfg.fa_hz
    q_idx = np.arange(1, cfg.q + 1)

    out = np.empty((cfg.m, cfg.n, qm), dtype=np.complex128)
    # Signed DFT bins representable after decimation (numpy fftfreq order).
    small_bins = np.fft.fftfreq(qm, 1.0 / qm).astype(int)
    for m in range(cfg.m):
        demod = gated * np.exp(-2j * np.pi * nu_m[m] * q_idx)[None, :]
        spec = np.fft.fft(demod, axis=1)
        # Keeping exactly the decimated-representable band realizes the
        # brick-wall low-pass and the decimation in one alias-free step.
        kept = spec[:, small_bins % cfg.q] / cfg.m
        out[m] = np.fft.ifft(kept, axis=1)
    return out


def interpolate_restore(small, cfg):
    """Upsample each Doppler fiber by M (band-limited) and re-apply the
    per-transmitter modulation, restoring an M x N x Q tensor.

    The restored tensor follows the full-CPI masked CP model with the same
    transmit/receive factors as the input, so angle estimation is
    unaffected by the round trip.
    """
    small = check_tensor3(small, "small")
    if small.shape != (cfg.m, cfg.n, cfg.pulses_per_channel):
        raise ValueError(
            f"small tensor shape {small.shape} inconsistent with config "
            f"(M={cfg.m}, N={cfg.n}, Q/M={cfg.pulses_per_channel})"
        )
    restored = _fft_resample(small, cfg.q, axis=2)
    mask = build_mask(cfg)
    return restored * mask.tensor


def direct_synthesis(scene, cfg, snr_db=None, seed=None):
    """One-step synthesis of the full-CPI tensor, shape (M, N, Q).

    Builds the masked CP model: the CP part has steering factors for the
    transmit and receive arrays and a Doppler/fading factor
    ``C[q, k] = rcs_k * e^{j 2 pi nu_k q}`` (q = 1..Q); the unit-modulus
    mask carries the per-transmitter modulation. This is the fast path used
    by all Monte Carlo experiments.
    """
    _warn_doppler_ambiguity(scene, cfg)
    a = steering_matrix(scene.dod, cfg.m)
    b = steering_matrix(scene.doa, cfg.n)
    q = np.arange(1, cfg.q + 1)
    c = scene.rcs[None, :] * np.exp(2j * np.pi * np.outer(q, scene.doppler))
    signal = hadamard(cp_construct(a, b, c), build_mask(cfg).tensor)
    return add_noise(signal, snr_db, seed)


def direct_synthesis_decimated(scene, cfg, snr_db=None, seed=None):
    """One-step synthesis of the per-channel decimated tensor (M, N, Q/M).

    The Doppler factor advances by ``M * nu_k`` cycles per retained pulse,
    starting at exponent zero.
    """
    a = steering_matrix(scene.dod, cfg.m)
    b = steering_matrix(scene.doa, cfg.n)
    qbar = np.arange(cfg.pulses_per_channel)
    c = scene.rcs[None, :] * np.exp(
        2j * np.pi * np.outer(qbar, cfg.m * scene.doppler)
    )
    return add_noise(cp_construct(a, b, c), snr_db, seed)
