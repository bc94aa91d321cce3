"""Slow-time MIMO radar simulation and joint DOD/DOA estimation.

The received signal of a Doppler-division MIMO radar over one coherent
processing interval is modeled as a complex 3-way tensor: a CP (rank-K)
part carrying the target angles and Dopplers, multiplied elementwise by a
known unit-modulus phase-modulation mask. This package provides the tensor
algebra, a masked alternating-least-squares CP solver, shift-invariance
angle estimators built on it, a scene/front-end simulator, and a Monte
Carlo benchmarking harness with a CLI.
"""

from .decomposition import AlsOptions, FactorSet, MaskedParafac, als_masked, als_standard, normalize_factors
from .estimators import (
    METHODS,
    AngleEstimator,
    EstimationResult,
    angles_from_stacked_factor,
    baseline_esprit,
    baseline_parafac_small,
    build_receive_augmented,
    build_transmit_augmented,
    estimate_proposed,
    pair_angles,
    uniqueness_check,
)
from .experiments import (
    DESK_RADAR,
    FULL_RADAR,
    ExperimentConfig,
    ResultRow,
    ResultTable,
    emit_csv,
    load_config,
    run_resolution_sweep,
    run_rmse_sweep,
)
from .frontend import (
    chirp,
    demodulate_decimate,
    detect_range_gate,
    direct_synthesis,
    direct_synthesis_decimated,
    dominant_doppler_peaks,
    interpolate_restore,
    matched_filter,
    range_doppler_map,
    synthesize_fast_time,
)
from .linalg import EigResult, eig, lstsq, pinv
from .scene import (
    MaskTensor,
    RadarConfig,
    TargetScene,
    add_noise,
    build_mask,
    ddma_frequencies,
    ddma_matrix,
    sample_scene,
    steering_matrix,
    steering_vector,
)
from .tensor_ops import concat, cp_construct, fold, frob_norm, hadamard, khatri_rao, unfold

__version__ = "0.1.0"

__all__ = [
    "AlsOptions", "AngleEstimator", "DESK_RADAR", "EigResult",
    "EstimationResult", "ExperimentConfig", "FULL_RADAR", "FactorSet",
    "METHODS", "MaskTensor", "MaskedParafac", "RadarConfig", "ResultRow",
    "ResultTable", "TargetScene", "add_noise", "als_masked", "als_standard",
    "angles_from_stacked_factor", "baseline_esprit", "baseline_parafac_small",
    "build_mask", "build_receive_augmented", "build_transmit_augmented",
    "chirp", "concat", "cp_construct", "ddma_frequencies", "ddma_matrix",
    "demodulate_decimate", "detect_range_gate", "direct_synthesis",
    "direct_synthesis_decimated", "dominant_doppler_peaks", "eig", "emit_csv",
    "estimate_proposed", "fold", "frob_norm", "hadamard", "interpolate_restore",
    "khatri_rao", "load_config", "lstsq", "matched_filter", "normalize_factors",
    "pair_angles", "pinv", "range_doppler_map", "run_resolution_sweep",
    "run_rmse_sweep", "sample_scene", "steering_matrix", "steering_vector",
    "synthesize_fast_time", "unfold", "uniqueness_check",
]
