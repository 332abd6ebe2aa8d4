"""Axis sweeps (train then evaluate greedily) and the exhaustive-oracle table."""
from __future__ import annotations

import csv
import math
import os

import numpy as np

from ..agent import load_checkpoint
from ..env import enumerate_oracle, inner_problem, policy_head_sizes
from ..inner import solve
from ..sysmodel import ModeAssignment
from .config import ExperimentConfig, env_config, with_axis_value
from .train import CHECKPOINT, InfeasibleEverywhere, evaluate_policy, heldout_channels, run_train, step_summary

SWEEP_COLUMNS = ["axis", "value", "scheme", "seed", "n_draws", "mean_energy_mj",
                 "median_energy_mj", "infeasible_frac", "active_ratio", "passive_ratio",
                 "idle_ratio", "mean_rho", "mean_t2_s"]


class MissingCheckpoint(FileNotFoundError):
    pass


def _fmt(v):
    return v if isinstance(v, str) else repr(float(v)) if isinstance(v, float) else v


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def eval_row(records, energy) -> dict:
    s = step_summary(records)
    return {"n_draws": len(energy), "mean_energy_mj": s["mean_energy_mj"],
            "median_energy_mj": float(np.median(energy) * 1e3),
            "infeasible_frac": s["infeasible_frac"], "active_ratio": s["active_ratio"],
            "passive_ratio": s["passive_ratio"], "idle_ratio": s["idle_ratio"],
            "mean_rho": s["mean_rho"], "mean_t2_s": s["mean_t2_s"]}


def run_sweep(cfg: ExperimentConfig, axis: str | None = None, values=None, seeds=None,
              schemes=None, out_dir: str | None = None, retrain: bool | None = None,
              backend: str | None = None, progress=None) -> list[dict]:
    """For each axis value, scheme and seed: train (or load) a policy and
    evaluate it greedily on the fixed held-out draws. Schemes without policy
    heads (passive, no-RIS) are evaluated directly.
    """
    axis = axis or cfg.sweep.axis
    values = list(cfg.sweep.values if values is None else values)
    seeds = list(cfg.seeds if seeds is None else seeds)
    schemes = list(cfg.sweep.schemes if schemes is None else schemes)
    retrain = cfg.sweep.retrain if retrain is None else retrain
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for value in values:
        vcfg = with_axis_value(cfg, axis, value)
        for scheme in schemes:
            ecfg = env_config(vcfg, scheme)
            held = heldout_channels(ecfg, vcfg.train.eval_draws, vcfg.train.eval_seed)
            has_heads = bool(policy_head_sizes(scheme, ecfg.n_elements, ecfg.shared_rho))
            for seed in seeds:
                run_dir = os.path.join(out_dir, f"{axis}={value:g}", scheme, f"seed={seed}")
                agent = None
                if has_heads:
                    ckpt = os.path.join(run_dir, CHECKPOINT)
                    if retrain:
                        try:
                            agent = run_train(vcfg, seed, run_dir, scheme=scheme,
                                              backend=backend).agent
                        except InfeasibleEverywhere:
                            agent = load_checkpoint(ckpt)[0]
                    elif os.path.exists(ckpt):
                        agent = load_checkpoint(ckpt)[0]
                    else:
                        raise MissingCheckpoint(f"no checkpoint at {ckpt}; run with retrain")
                records, energy = evaluate_policy(agent, ecfg, held, backend=backend)
                row = {"axis": axis, "value": float(value), "scheme": scheme, "seed": seed,
                       **eval_row(records, energy)}
                rows.append(row)
                if progress:
                    progress(row)
    write_csv(os.path.join(out_dir, f"sweep_{axis}.csv"), SWEEP_COLUMNS, rows)
    return rows


def oracle_columns(schemes) -> list[str]:
    cols = ["draw"] + [f"{s}_energy_mj" for s in schemes] + ["all_idle_energy_mj"]
    return cols + ["active_ratio", "passive_ratio", "idle_ratio", "mean_rho"]


def run_oracle(cfg: ExperimentConfig, out_dir: str | None = None, schemes=None,
               uniform_rho: bool | None = None, n_draws: int | None = None,
               backend: str | None = None) -> list[dict]:
    """Global optimum per held-out draw for each scheme, plus the all-idle baseline.

    Mode ratios are those of the first scheme's optimum (hybrid by default).
    Infeasible entries are written as ``inf``.
    """
    schemes = list(cfg.oracle.schemes if schemes is None else schemes)
    uniform_rho = cfg.oracle.uniform_rho if uniform_rho is None else uniform_rho
    ecfg = env_config(cfg)
    held = heldout_channels(ecfg, n_draws or cfg.train.eval_draws, cfg.train.eval_seed)
    N = ecfg.n_elements
    rows = []
    for i, ch in enumerate(held):
        row = {"draw": i}
        first = None
        for s in schemes:
            res = enumerate_oracle(ch, ecfg, uniform_rho=uniform_rho, scheme=s, backend=backend)
            row[f"{s}_energy_mj"] = res.objective * 1e3
            first = first or res
        idle = solve(inner_problem(ch, ModeAssignment.idle(N), ecfg), backend=backend)
        row["all_idle_energy_mj"] = idle.objective * 1e3 if idle.feasible else math.inf
        if first is not None and first.feasible:
            act, pas, idl = first.modes.counts()
            r = first.modes.rho[first.modes.active_mask]
            row.update(active_ratio=act / N, passive_ratio=pas / N, idle_ratio=idl / N,
                       mean_rho=float(r.mean()) if r.size else math.nan)
        else:
            row.update(active_ratio=math.nan, passive_ratio=math.nan, idle_ratio=math.nan,
                       mean_rho=math.nan)
        rows.append(row)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "oracle.csv"), oracle_columns(schemes), rows)
    if all(math.isinf(v) for r in rows for k, v in r.items() if k.endswith("energy_mj")):
        raise InfeasibleEverywhere("every draw is infeasible under every scheme")
    return rows
