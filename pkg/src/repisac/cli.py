"""Command-line entry point.

Subcommands: ``pod`` (detection-probability sweep), ``secdf`` (downlink SE
CDF), ``calibrate`` (GLRT threshold only), ``oracle-check`` (closed form vs
brute-force oracle). Exit codes: 0 success, 1 configuration/usage error,
2 numerical-domain error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .channel import clutter_covariance, gen_channels
from .detector import oracle_check, threshold_from_null_stats, trial_rng
from .errors import ConfigError, NumericalDomainError
from .harness import (STUDY_POD, default_workers, run_pod_vs_rcs, run_se_cdf,
                      run_trials, suggest_rcs_grid)
from .precoding import build_precoders
from .scenario import ScenarioConfig, drop_entities, load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repisac",
                                     description="Repeater-assisted bi-static ISAC studies")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_out=False):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--trials", type=int, help="override mc_trials")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default ${'{'}REPISAC_WORKERS{'}'} or 1)")
        p.add_argument("--out", required=need_out, help="output CSV path")

    p_pod = sub.add_parser("pod", help="PoD versus RCS-variance sweep")
    common(p_pod, need_out=True)
    p_pod.add_argument("--grid", help="comma-separated sigma_T^2 grid "
                                      "(default: auto-scaled 8-point log grid)")
    p_pod.add_argument("--gains", help="comma-separated repeater gains in dB; "
                                       "'none' means no repeater (default: config gain + none)")

    p_se = sub.add_parser("secdf", help="downlink per-user SE CDF")
    common(p_se, need_out=True)

    p_cal = sub.add_parser("calibrate", help="calibrate the GLRT threshold only")
    common(p_cal)

    p_orc = sub.add_parser("oracle-check", help="closed form vs least-squares oracle")
    p_orc.add_argument("--trials", type=int, default=100)
    p_orc.add_argument("--seed", type=int, default=0)
    return parser


def _load(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        updates["mc_trials"] = args.trials
    return config.with_updates(**updates) if updates else config


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def _cmd_pod(args) -> int:
    config = _load(args)
    if args.grid:
        grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
    else:
        grid = suggest_rcs_grid(config)
    gains = None
    if args.gains:
        gains = tuple(None if tok.strip().lower() == "none" else float(tok)
                      for tok in args.gains.split(","))
    result = run_pod_vs_rcs(config, grid, repeater_gains_db=gains, workers=_workers(args))
    result.write_csv(args.out)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    return 0


def _cmd_secdf(args) -> int:
    config = _load(args)
    result = run_se_cdf(config, workers=_workers(args))
    result.write_csv(args.out)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    config = _load(args)
    geometry = drop_entities(config, trial_rng(config.master_seed, (STUDY_POD, 0), 0))
    channels = gen_channels(geometry, config,
                            trial_rng(config.master_seed, (STUDY_POD, 1), 0))
    clutter_model = clutter_covariance(config, geometry)
    precoders = build_precoders(config, channels)
    t_null = run_trials(config, channels, clutter_model, precoders,
                        (STUDY_POD, 2, 0, 0), config.calibration_trials,
                        force_null=True, workers=_workers(args))
    threshold = threshold_from_null_stats(t_null, config.pfa_target)
    empirical_pfa = float(np.mean(t_null >= threshold))
    print(f"threshold={threshold!r} empirical_pfa={empirical_pfa!r} "
          f"trials={config.calibration_trials}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("threshold,empirical_pfa,trials\n")
            fh.write(f"{threshold!r},{empirical_pfa!r},{config.calibration_trials}\n")
    return 0


def _cmd_oracle_check(args) -> int:
    max_err, tol = oracle_check(n_instances=args.trials, seed=args.seed)
    ok = max_err <= tol
    print(f"oracle-check: {args.trials} instances, max relative error {max_err:.3e} "
          f"(tolerance {tol:.1e}) -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def main_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    handlers = {"pod": _cmd_pod, "secdf": _cmd_secdf,
                "calibrate": _cmd_calibrate, "oracle-check": _cmd_oracle_check}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalDomainError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(main_cli())


if __name__ == "__main__":
    main()
