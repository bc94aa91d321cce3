"""Command-line harness.

Subcommands:

* ``simulate``  - synthesize one scene's tensor to a .npy file, optionally
                  with a range-Doppler magnitude CSV from the fast-time
                  chain;
* ``estimate``  - run one method on one scene and print the angle pairs
                  (degrees, CSV on stdout);
* ``benchmark`` - run an RMSE or resolution sweep from a config file and
                  write the result CSV.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""

import argparse
import sys

import numpy as np

from .decomposition import AlsOptions
from .estimators import baseline_esprit, baseline_parafac_small, estimate_proposed
from .experiments import (
    DESK_RADAR,
    ExperimentConfig,
    config_from_mapping,
    emit_csv,
    load_config,
    run_experiment,
)
from .frontend import (
    direct_synthesis,
    direct_synthesis_decimated,
    matched_filter,
    range_doppler_map,
    synthesize_fast_time,
)
from .scene import TargetScene, build_mask


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="stmimo", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--snr", help="comma-separated SNR grid in dB")
        p.add_argument("--trials", type=int, help="Monte Carlo trials per cell")
        p.add_argument("--method", help="comma-separated method subset")
        p.add_argument("--out", help="output path")
        p.add_argument("--noiseless", action="store_true",
                       help="disable additive noise")
        p.add_argument("--desk", action="store_true",
                       help="small-scale preset (M=4, N=4, Q=32, 50 trials)")

    p_sim = sub.add_parser("simulate", help="dump one scene's tensor")
    add_common(p_sim)
    p_sim.add_argument("--rd-csv", help="also write a range-Doppler magnitude CSV")

    p_est = sub.add_parser("estimate", help="estimate one scene, print pairs")
    add_common(p_est)

    p_bench = sub.add_parser("benchmark", help="run a Monte Carlo sweep")
    add_common(p_bench)
    return parser


def _desk_config():
    return ExperimentConfig(radar=DESK_RADAR, trials=50)


def _resolve_config(args):
    base = _desk_config() if args.desk else ExperimentConfig()
    if args.config:
        try:
            cfg = load_config(args.config, base=base)
        except FileNotFoundError:
            raise _UsageError(f"config file not found: {args.config}")
    else:
        cfg = base
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.snr:
        overrides["snr_db"] = args.snr
    if args.trials is not None:
        overrides["trials"] = str(args.trials)
    if args.method:
        overrides["methods"] = args.method
    if args.noiseless:
        overrides["noiseless"] = "true"
    if overrides:
        cfg = config_from_mapping(overrides, base=cfg)
    return cfg


def _scene_from_config(cfg):
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0, 0))
    scene_ss = ss.spawn(4)[0]
    rng = np.random.default_rng(scene_ss)
    k = cfg.n_targets
    rcs = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)
    return TargetScene(
        dod=np.deg2rad(cfg.dod_deg),
        doa=np.deg2rad(cfg.doa_deg),
        doppler=np.asarray(cfg.doppler),
        rcs=rcs,
    )


def _single_snr(cfg):
    if cfg.noiseless:
        return None
    return cfg.snr_grid[0]


def _cmd_simulate(args):
    cfg = _resolve_config(args)
    if not args.out:
        raise _UsageError("simulate requires --out for the tensor dump")
    scene = _scene_from_config(cfg)
    snr = _single_snr(cfg)
    noise_ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0, 0)).spawn(4)[1]
    tensor = direct_synthesis(scene, cfg.radar, snr, noise_ss)
    np.save(args.out, tensor)
    print(f"wrote tensor {tensor.shape} to {args.out}")
    if args.rd_csv:
        cube = synthesize_fast_time(scene, cfg.radar, noise_ss, snr)
        rd = range_doppler_map(matched_filter(cube, cfg.radar))
        mag = np.abs(rd[0])  # first receive element: rows Doppler, cols range
        lines = [",".join(f"{v:.9g}" for v in row) for row in mag]
        with open(args.rd_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote range-Doppler map {mag.shape} to {args.rd_csv}")
    return 0


def _cmd_estimate(args):
    cfg = _resolve_config(args)
    if len(cfg.methods) != 1:
        raise _UsageError("estimate needs exactly one --method")
    method = cfg.methods[0]
    scene = _scene_from_config(cfg)
    snr = _single_snr(cfg)
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0, 0)).spawn(4)
    opts = AlsOptions(
        max_iters=cfg.als.max_iters, rel_tol=cfg.als.rel_tol,
        restarts=cfg.als.restarts, init=cfg.als.init, seed=ss[3],
    )
    if method == "proposed":
        y = direct_synthesis(scene, cfg.radar, snr, ss[1])
        result = estimate_proposed(y, build_mask(cfg.radar), cfg.n_targets, opts)
    else:
        y = direct_synthesis_decimated(scene, cfg.radar, snr, ss[2])
        if method == "parafac_small":
            result = baseline_parafac_small(y, cfg.n_targets, opts)
        else:
            result = baseline_esprit(y, cfg.n_targets)
    print("dod_deg,doa_deg")
    for dod, doa in result.pairs:
        print(f"{np.degrees(dod):.9g},{np.degrees(doa):.9g}")
    if result.flags:
        print(f"# flags: {','.join(result.flags)}", file=sys.stderr)
    return 0


def _cmd_benchmark(args):
    if not args.config and not args.desk:
        raise _UsageError("benchmark requires --config (or --desk)")
    cfg = _resolve_config(args)
    out = args.out or cfg.out
    if not out:
        raise _UsageError("benchmark requires an output path (--out or "
                          "'out' in the config)")
    table = run_experiment(cfg)
    emit_csv(table, out, cfg)
    print(f"wrote {len(table.rows)} rows to {out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "benchmark": _cmd_benchmark,
}


def cli_main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
