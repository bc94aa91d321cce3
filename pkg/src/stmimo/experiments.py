"""Monte Carlo experiment harness: RMSE-vs-SNR and resolution-probability
sweeps with reproducible seeding and CSV output.

Reproducibility contract: (config, seed) determines the output bytes.
Every trial derives its own random streams from the master seed and the
(snr index, trial index) pair, so results are identical no matter how many
worker threads run the trials (cap with the ``STMIMO_THREADS`` environment
variable; default is serial).

Config files are flat ``key = value`` text, ``#`` comments, lists
comma-separated; angles in degrees. See the README for the key table.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np

from .decomposition import AlsOptions
from .estimators import (
    METHODS,
    baseline_esprit,
    baseline_parafac_small,
    estimate_proposed,
)
from .frontend import direct_synthesis, direct_synthesis_decimated
from .scene import RadarConfig, TargetScene, build_mask

FULL_RADAR = RadarConfig(m=8, n=10, q=80, fa_hz=50e3, t_s=10e-6, bandwidth_hz=40e6)
DESK_RADAR = RadarConfig(m=4, n=4, q=32, fa_hz=50e3, t_s=10e-6, bandwidth_hz=40e6)

DEFAULT_DOD_DEG = (-30.0, 25.0)
DEFAULT_DOA_DEG = (-15.0, 20.0)
DEFAULT_DOPPLER = (0.02, -0.05)
DEFAULT_SNR_GRID = tuple(float(s) for s in range(-20, 25, 5))


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one sweep."""

    radar: RadarConfig = FULL_RADAR
    dod_deg: tuple = DEFAULT_DOD_DEG
    doa_deg: tuple = DEFAULT_DOA_DEG
    doppler: tuple = DEFAULT_DOPPLER
    snr_grid: tuple = DEFAULT_SNR_GRID
    trials: int = 200
    methods: tuple = METHODS
    seed: int = 0
    als: AlsOptions = field(default_factory=AlsOptions)
    noiseless: bool = False
    experiment: str = "rmse"
    out: str = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.snr_grid) == 0:
            raise ValueError("snr_grid must be non-empty")
        if len(self.methods) == 0:
            raise ValueError("methods must be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.experiment not in ("rmse", "resolution"):
            raise ValueError(f"unknown experiment kind {self.experiment!r}")
        k = len(self.dod_deg)
        if not (len(self.doa_deg) == len(self.doppler) == k):
            raise ValueError("dod_deg, doa_deg and doppler must align")

    @property
    def n_targets(self):
        return len(self.dod_deg)


@dataclass(frozen=True)
class ResultRow:
    method: str
    snr_db: float
    metric: str
    value: float
    trials: int
    seed: int


@dataclass
class ResultTable:
    rows: list

    def value(self, method, snr_db, metric):
        for row in self.rows:
            if (
                row.method == method
                and row.metric == metric
                and np.isclose(row.snr_db, snr_db)
            ):
                return row.value
        raise KeyError((method, snr_db, metric))


def match_to_truth(dod_est, doa_est, dod_true, doa_true):
    """Reorder estimates by the permutation minimizing the total squared
    angle error (exact search; intended for K <= 6)."""
    k = len(dod_true)
    best_perm, best_cost = None, np.inf
    for perm in permutations(range(k)):
        p = list(perm)
        cost = float(
            np.sum((dod_est[p] - dod_true) ** 2 + (doa_est[p] - doa_true) ** 2)
        )
        if cost < best_cost:
            best_cost, best_perm = cost, p
    return dod_est[best_perm], doa_est[best_perm]


def _worker_count():
    raw = os.environ.get("STMIMO_THREADS", "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise ValueError(f"STMIMO_THREADS must be an integer, got {raw!r}") from exc
    return max(1, count)


def _trial_record(cfg, mask, snr_idx, trial):
    """Run every requested method on freshly drawn fading and noise.

    Returns {method: {"err_dod": ..., "err_doa": ..., "resolved": ...}} with
    None marking a failed trial. Angle errors are in radians, already
    permutation-matched to the truth.
    """
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(snr_idx, trial))
    scene_ss, noise_full_ss, noise_small_ss, als_ss = ss.spawn(4)
    snr = None if cfg.noiseless else cfg.snr_grid[snr_idx]

    dod_true = np.deg2rad(np.asarray(cfg.dod_deg, dtype=float))
    doa_true = np.deg2rad(np.asarray(cfg.doa_deg, dtype=float))
    scene = TargetScene(
        dod=dod_true,
        doa=doa_true,
        doppler=np.asarray(cfg.doppler, dtype=float),
        rcs=_swerling_rcs(cfg.n_targets, scene_ss),
    )

    y_full = y_small = None
    if "proposed" in cfg.methods:
        y_full = direct_synthesis(scene, cfg.radar, snr, noise_full_ss)
    if "parafac_small" in cfg.methods or "esprit" in cfg.methods:
        y_small = direct_synthesis_decimated(scene, cfg.radar, snr, noise_small_ss)

    half_dod = abs(dod_true[0] - dod_true[1]) / 2.0 if cfg.n_targets == 2 else None
    half_doa = abs(doa_true[0] - doa_true[1]) / 2.0 if cfg.n_targets == 2 else None

    record = {}
    als_seeds = als_ss.spawn(len(cfg.methods))
    for method, method_ss in zip(cfg.methods, als_seeds):
        opts = replace(cfg.als, seed=method_ss)
        try:
            if method == "proposed":
                res = estimate_proposed(y_full, mask, cfg.n_targets, opts)
            elif method == "parafac_small":
                res = baseline_parafac_small(y_small, cfg.n_targets, opts)
            else:
                res = baseline_esprit(y_small, cfg.n_targets)
            dod_hat, doa_hat = match_to_truth(res.dod, res.doa, dod_true, doa_true)
        except Exception:
            record[method] = None
            continue
        err_dod = dod_hat - dod_true
        err_doa = doa_hat - doa_true
        resolved = None
        if cfg.n_targets == 2:
            resolved = bool(
                np.all(np.abs(err_dod) <= half_dod)
                and np.all(np.abs(err_doa) <= half_doa)
            )
        record[method] = {
            "err_dod": err_dod,
            "err_doa": err_doa,
            "resolved": resolved,
        }
    return record


def _swerling_rcs(k, seed):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)


def _run_all_trials(cfg):
    """Evaluate every (snr, trial) cell; deterministic regardless of the
    worker count because each cell owns its seed."""
    import warnings as _warnings

    mask = build_mask(cfg.radar)
    tasks = [(i, t) for i in range(len(cfg.snr_grid)) for t in range(cfg.trials)]

    def run(task):
        i, t = task
        return task, _trial_record(cfg, mask, i, t)

    workers = _worker_count()
    results = {}
    # Identifiability/ambiguity warnings are per-trial noise here; the
    # sweeps report failures through the failed_trials metric instead.
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore", RuntimeWarning)
        if workers == 1:
            for task in tasks:
                key, rec = run(task)
                results[key] = rec
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for key, rec in pool.map(run, tasks):
                    results[key] = rec
    return results


def _aggregate(cfg, results, resolution):
    rows = []
    for method in cfg.methods:
        for i, snr in enumerate(cfg.snr_grid):
            records = [results[(i, t)].get(method) for t in range(cfg.trials)]
            ok = [r for r in records if r is not None]
            failures = len(records) - len(ok)
            if resolution:
                resolved = sum(1 for r in ok if r["resolved"])
                rows.append(ResultRow(
                    method, float(snr), "resolution_probability",
                    resolved / cfg.trials, cfg.trials, cfg.seed,
                ))
            else:
                if ok:
                    sq_dod = np.concatenate([r["err_dod"] for r in ok]) ** 2
                    sq_doa = np.concatenate([r["err_doa"] for r in ok]) ** 2
                    rmse_dod = np.degrees(np.sqrt(np.mean(sq_dod)))
                    rmse_doa = np.degrees(np.sqrt(np.mean(sq_doa)))
                    combined = float(np.sqrt((rmse_dod**2 + rmse_doa**2) / 2.0))
                else:
                    rmse_dod = rmse_doa = combined = float("nan")
                rows.append(ResultRow(
                    method, float(snr), "rmse_dod_deg",
                    float(rmse_dod), cfg.trials, cfg.seed,
                ))
                rows.append(ResultRow(
                    method, float(snr), "rmse_doa_deg",
                    float(rmse_doa), cfg.trials, cfg.seed,
                ))
                rows.append(ResultRow(
                    method, float(snr), "rmse_combined_deg",
                    combined, cfg.trials, cfg.seed,
                ))
            rows.append(ResultRow(
                method, float(snr), "failed_trials",
                float(failures), cfg.trials, cfg.seed,
            ))
    rows.sort(key=lambda r: (r.method, r.snr_db, r.metric))
    return ResultTable(rows=rows)


def run_rmse_sweep(cfg):
    """Per-angle and combined RMSE over the SNR grid.

    Each trial redraws the Swerling-I fading and the noise (angles stay
    fixed); estimates are matched to the truth by the minimum total squared
    error permutation before the errors enter the average. Failed trials
    are excluded from the RMSE and counted in ``failed_trials``.
    """
    return _aggregate(cfg, _run_all_trials(cfg), resolution=False)


def run_resolution_sweep(cfg):
    """Probability that two targets are resolved, per method and SNR.

    A trial resolves the pair when, after permutation matching, every
    angle estimate lands within half the true angular separation of its
    target (both in DOD and DOA). Failed trials count as unresolved.
    """
    if cfg.n_targets != 2:
        raise ValueError("the resolution sweep is defined for K = 2 scenes")
    return _aggregate(cfg, _run_all_trials(cfg), resolution=True)


def run_experiment(cfg):
    if cfg.experiment == "resolution":
        return run_resolution_sweep(cfg)
    return run_rmse_sweep(cfg)


# ---------------------------------------------------------------------------
# Plain-text key = value config format
# ---------------------------------------------------------------------------

_RADAR_KEYS = ("m", "n", "q", "l", "fa_hz", "t_s", "bandwidth_hz")
_LIST_KEYS = ("dod_deg", "doa_deg", "doppler", "snr_db", "methods")
_SCALAR_KEYS = ("experiment", "seed", "trials", "noiseless", "out",
                "als_max_iters", "als_rel_tol", "als_restarts", "als_init")
_ALL_KEYS = set(_RADAR_KEYS) | set(_LIST_KEYS) | set(_SCALAR_KEYS)


def parse_kv_text(text):
    """Parse flat ``key = value`` lines into a string mapping."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        mapping[key] = value
    return mapping


def _parse_bool(value):
    low = value.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_float_list(value):
    return tuple(float(part) for part in value.split(",") if part.strip())


def config_from_mapping(mapping, base=None):
    """Build an ExperimentConfig from parsed key/value strings.

    Unknown keys are rejected so typos fail loudly. `base` supplies the
    defaults to override (defaults to the full-scale reference experiment).
    """
    unknown = set(mapping) - _ALL_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = base or ExperimentConfig()

    radar_kwargs = {
        "m": cfg.radar.m, "n": cfg.radar.n, "q": cfg.radar.q,
        "fa_hz": cfg.radar.fa_hz, "t_s": cfg.radar.t_s,
        "bandwidth_hz": cfg.radar.bandwidth_hz,
    }
    for key in ("m", "n", "q"):
        if key in mapping:
            radar_kwargs[key] = int(mapping[key])
    if "l" in mapping:
        radar_kwargs["l"] = int(mapping["l"])
    for key in ("fa_hz", "t_s", "bandwidth_hz"):
        if key in mapping:
            radar_kwargs[key] = float(mapping[key])
    radar = RadarConfig(**radar_kwargs)

    als = AlsOptions(
        max_iters=int(mapping.get("als_max_iters", cfg.als.max_iters)),
        rel_tol=float(mapping.get("als_rel_tol", cfg.als.rel_tol)),
        restarts=int(mapping.get("als_restarts", cfg.als.restarts)),
        init=mapping.get("als_init", cfg.als.init),
    )

    return ExperimentConfig(
        radar=radar,
        dod_deg=_parse_float_list(mapping["dod_deg"]) if "dod_deg" in mapping else cfg.dod_deg,
        doa_deg=_parse_float_list(mapping["doa_deg"]) if "doa_deg" in mapping else cfg.doa_deg,
        doppler=_parse_float_list(mapping["doppler"]) if "doppler" in mapping else cfg.doppler,
        snr_grid=_parse_float_list(mapping["snr_db"]) if "snr_db" in mapping else cfg.snr_grid,
        trials=int(mapping.get("trials", cfg.trials)),
        methods=tuple(
            part.strip() for part in mapping["methods"].split(",") if part.strip()
        ) if "methods" in mapping else cfg.methods,
        seed=int(mapping.get("seed", cfg.seed)),
        als=als,
        noiseless=_parse_bool(mapping["noiseless"]) if "noiseless" in mapping else cfg.noiseless,
        experiment=mapping.get("experiment", cfg.experiment),
        out=mapping.get("out", cfg.out),
    )


def load_config(path, base=None):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_mapping(parse_kv_text(fh.read()), base=base)


def config_to_kv(cfg):
    """Serialize the fully resolved config back to the key = value format."""
    lines = [
        f"experiment = {cfg.experiment}",
        f"seed = {cfg.seed}",
        f"trials = {cfg.trials}",
        f"snr_db = {','.join(f'{s:.9g}' for s in cfg.snr_grid)}",
        f"methods = {','.join(cfg.methods)}",
        f"noiseless = {str(cfg.noiseless).lower()}",
        f"m = {cfg.radar.m}",
        f"n = {cfg.radar.n}",
        f"q = {cfg.radar.q}",
        f"l = {cfg.radar.l}",
        f"fa_hz = {cfg.radar.fa_hz:.9g}",
        f"t_s = {cfg.radar.t_s:.9g}",
        f"bandwidth_hz = {cfg.radar.bandwidth_hz:.9g}",
        f"dod_deg = {','.join(f'{v:.9g}' for v in cfg.dod_deg)}",
        f"doa_deg = {','.join(f'{v:.9g}' for v in cfg.doa_deg)}",
        f"doppler = {','.join(f'{v:.9g}' for v in cfg.doppler)}",
        f"als_max_iters = {cfg.als.max_iters}",
        f"als_rel_tol = {cfg.als.rel_tol:.9g}",
        f"als_restarts = {cfg.als.restarts}",
        f"als_init = {cfg.als.init}",
    ]
    if cfg.out:
        lines.append(f"out = {cfg.out}")
    return "\n".join(lines) + "\n"


def emit_csv(table, path, cfg=None):
    """Write the result table as CSV (9 significant digits), plus a sidecar
    ``<path>.meta`` recording the resolved config when one is supplied."""
    lines = ["method,snr_db,metric,value,trials,seed"]
    for row in table.rows:
        lines.append(
            f"{row.method},{row.snr_db:.9g},{row.metric},"
            f"{row.value:.9g},{row.trials},{row.seed}"
        )
    payload = "\n".join(lines) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
        if cfg is not None:
            with open(f"{path}.meta", "w", encoding="utf-8", newline="\n") as fh:
                fh.write(config_to_kv(cfg))
    except OSError as exc:
        raise OSError(f"failed writing results to {path}: {exc}") from exc
