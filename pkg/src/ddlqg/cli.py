"""Command-line front end.

Subcommands: collect, solve-lqr, solve-kalman, solve-robust, simulate,
reproduce. Each reads ``--config`` (or a built-in ``--scenario``) and accepts
the overrides ``--seed``, ``--T``, ``--alpha1``, ``--alpha2`` and
``--noise-bar``. The exit code is 0 only if every requested stage succeeds.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .experiments import (
    SCENARIOS,
    ExperimentConfig,
    collect,
    load_config,
    oracle_gains,
    run_experiment,
    scenario_config,
)
from .lmi import (
    build_kalman_data_sdp,
    build_kalman_robust_sdp,
    build_lqr_data_sdp,
    build_lqr_regularized_sdp,
    build_phi_min_sdp,
    gap_diagnostics,
    pseudo_inverse_split,
    recover_kalman_gain,
    recover_lqr_gain,
    split_from_solution,
)
from .lqg import composite_stability
from .sdp import solve_or_raise

logger = logging.getLogger("ddlqg")


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = scenario_config(args.scenario, rank_Ew=args.rank_Ew)
    return cfg.with_overrides(seed=args.seed, T=args.T, alpha1=args.alpha1, alpha2=args.alpha2,
                              noise_bar=args.noise_bar, output_dir=args.output_dir,
                              workers=args.workers)


def cmd_collect(cfg: ExperimentConfig) -> dict:
    out = io.ensure_dir(cfg.output_dir)
    files = []
    for seed in cfg.seeds:
        data = collect(cfg, seed)
        path = out / f"trajectory_{seed}.csv"
        io.write_trajectory_csv(data, path)
        files.append(str(path))
    return {"files": files}


def _solve_each(cfg: ExperimentConfig, fn) -> dict:
    out = io.ensure_dir(cfg.output_dir)
    K_bar, L_bar = oracle_gains(cfg)
    per_seed = {}
    for seed in cfg.seeds:
        data = collect(cfg, seed)
        t0 = time.perf_counter()
        rec = fn(data)
        rec["solve_time"] = time.perf_counter() - t0
        if "K" in rec:
            rec["K_err"] = float(np.linalg.norm(rec["K"] - K_bar, 2))
        if "L" in rec:
            rec["L_err"] = float(np.linalg.norm(rec["L"] - L_bar, 2))
        per_seed[str(seed)] = rec
    result = {"K_bar": K_bar, "L_bar": L_bar, "per_seed": per_seed}
    io.write_json(result, out / "gains.json")
    return result


def cmd_solve_lqr(cfg: ExperimentConfig) -> dict:
    def fn(data):
        if cfg.design == "robust":
            s = solve_or_raise(build_lqr_regularized_sdp(data, cfg.Wx, cfg.Wu, cfg.alpha1))
        else:
            s = solve_or_raise(build_lqr_data_sdp(data, cfg.Wx, cfg.Wu))
        return {"K": recover_lqr_gain(s, data), "objective": s.objective}
    return _solve_each(cfg, fn)


def cmd_solve_kalman(cfg: ExperimentConfig) -> dict:
    def fn(data):
        split = pseudo_inverse_split(data)
        s = solve_or_raise(build_kalman_data_sdp(data, split, cfg.Nx, cfg.Ny))
        return {"L": recover_kalman_gain(s), "objective": s.objective}
    return _solve_each(cfg, fn)


def cmd_solve_robust(cfg: ExperimentConfig) -> dict:
    def fn(data):
        s_k = solve_or_raise(build_lqr_regularized_sdp(data, cfg.Wx, cfg.Wu, cfg.alpha1))
        split = split_from_solution(solve_or_raise(build_phi_min_sdp(data)))
        s_l = solve_or_raise(build_kalman_robust_sdp(data, split, cfg.Nx, cfg.Ny, cfg.alpha2))
        K, L = recover_lqr_gain(s_k, data), recover_kalman_gain(s_l)
        v = s_l.values
        gap = gap_diagnostics(data, v["Sigma"], v["Pi"], split)
        comp = composite_stability(data, split, K, L, cfg.system)
        return {"K": K, "L": L,
                "objectives": {"lqr": s_k.objective, "kalman": s_l.objective},
                "psi_lambda_max": gap.psi_lambda_max, "psi_condition_holds": gap.condition_holds,
                "bound_product": gap.bound_product, "composite": comp.to_dict()}
    return _solve_each(cfg, fn)


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    return run_experiment(cfg).summary


def cmd_reproduce(cfg: ExperimentConfig) -> dict:
    return run_experiment(cfg).summary


COMMANDS = {
    "collect": (cmd_collect, "collect offline trajectories and write them as CSV"),
    "solve-lqr": (cmd_solve_lqr, "data-based LQR gain (regularized when the design is robust)"),
    "solve-kalman": (cmd_solve_kalman, "data-based steady-state Kalman gain"),
    "solve-robust": (cmd_solve_robust, "robust gains with noise-gap and composite diagnostics"),
    "simulate": (cmd_simulate, "design and run the closed loop for every seed"),
    "reproduce": (cmd_reproduce, "full scenario run with traces, gains.json and summary.json"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddlqg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        src = s.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="JSON configuration file")
        src.add_argument("--scenario", choices=SCENARIOS[:-1], default="BatchReactorNoiseFree",
                         help="built-in scenario used when no config is given")
        s.add_argument("--rank-Ew", dest="rank_Ew", type=int, default=4,
                       help="process-noise rank for BatchReactorNoisy")
        s.add_argument("--seed", type=int)
        s.add_argument("--T", type=int)
        s.add_argument("--alpha1", type=float)
        s.add_argument("--alpha2", type=float)
        s.add_argument("--noise-bar", dest="noise_bar", type=float)
        s.add_argument("--output-dir", dest="output_dir", type=Path)
        s.add_argument("--workers", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        result = COMMANDS[args.command][0](cfg)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"ddlqg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, dict) and result.get("errors"):
        for e in result["errors"]:
            print(f"seed {e['seed']}: stage {e['stage']} failed: {e['message']}", file=sys.stderr)
        return 1
    print(f"ddlqg {args.command}: wrote results to {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
