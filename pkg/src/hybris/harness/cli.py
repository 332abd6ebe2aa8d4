"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 scenario infeasible
everywhere, 3 inner-solver failure.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys

from ..inner import InputError, SolverFailure, format_solution, parse_problem, solve
from .config import SWEEP_AXES, ConfigError, ExperimentConfig, load_config, save_config
from .report import ReportError, report
from .sweep import MissingCheckpoint, run_oracle, run_sweep
from .train import InfeasibleEverywhere, run_train

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (defaults if omitted)")
    common.add_argument("--seed", type=int, action="append",
                        help="seed; repeat for several (overrides config seeds)")
    common.add_argument("--out", help="output directory (overrides config output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hybris", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train PPO policies, one per seed")
    t.add_argument("--scheme", help="override env.scheme")
    t.add_argument("--iterations", type=int)
    t.add_argument("--resume", action="store_true", help="continue from checkpoint.bin")

    s = sub.add_parser("sweep", parents=[common], help="train/evaluate along one axis")
    s.add_argument("--axis", choices=SWEEP_AXES)
    s.add_argument("--values", type=float, nargs="+")
    s.add_argument("--schemes", nargs="+")
    s.add_argument("--no-retrain", action="store_true", help="evaluate existing checkpoints")

    o = sub.add_parser("oracle", parents=[common], help="exhaustive mode search (N <= 6)")
    o.add_argument("--draws", type=int)
    o.add_argument("--per-element-rho", action="store_true")

    r = sub.add_parser("report", parents=[common], help="aggregate metrics / sweep CSVs")
    r.add_argument("inputs", nargs="+", help="CSV files or glob patterns")

    i = sub.add_parser("inner-solve", parents=[common], help="solve one inner problem file")
    i.add_argument("problem", help="key = value problem file")
    i.add_argument("--tol", type=float, default=1e-6)
    i.add_argument("--oracle", type=int, metavar="RESOLUTION",
                   help="also run the grid oracle at this resolution")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    if args.seed:
        cfg.seeds = list(args.seed)
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _cmd_train(args, cfg):
    for seed in cfg.seeds:
        run_dir = os.path.join(cfg.output_dir, f"seed={seed}")
        os.makedirs(run_dir, exist_ok=True)
        save_config(cfg, os.path.join(run_dir, "config.yaml"))
        res = run_train(cfg, seed, run_dir, scheme=args.scheme, iterations=args.iterations,
                        resume=args.resume,
                        progress=lambda r: logging.info("seed %d iter %d reward %.4f", seed,
                                                        r["iteration"], r["mean_reward"]))
        print(f"seed {seed}: {len(res.metrics)} iterations, checkpoint {res.checkpoint}")


def _cmd_inner(args):
    with open(args.problem) as f:
        prob = parse_problem(f.read())
    sol = solve(prob, tol=args.tol)
    sys.stdout.write(format_solution(sol))
    if args.oracle:
        from ..inner import oracle_grid
        o = oracle_grid(prob, args.oracle)
        print(f"oracle_status = {o.status}")
        if o.feasible:
            print(f"oracle_objective = {o.objective:.12g}")
            print(f"oracle_grid_bound = {o.extra['grid_bound']:.3g}")
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "inner-solve":
            return _cmd_inner(args)
        cfg = _config(args)
        if args.command == "train":
            _cmd_train(args, cfg)
        elif args.command == "sweep":
            rows = run_sweep(cfg, axis=args.axis, values=args.values, schemes=args.schemes,
                             retrain=False if args.no_retrain else None)
            print(f"{len(rows)} rows written to {cfg.output_dir}")
        elif args.command == "oracle":
            uniform = False if args.per_element_rho else None
            rows = run_oracle(cfg, cfg.output_dir, uniform_rho=uniform, n_draws=args.draws)
            print(f"{len(rows)} rows written to {os.path.join(cfg.output_dir, 'oracle.csv')}")
        elif args.command == "report":
            paths = sorted({p for pat in args.inputs for p in (glob.glob(pat) or [pat])})
            for name, path in report(paths, cfg.output_dir).items():
                print(f"{name}: {path}")
    except (ConfigError, InputError, ReportError, MissingCheckpoint, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleEverywhere as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
