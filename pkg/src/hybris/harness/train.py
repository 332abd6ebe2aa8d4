"""Training loop: collect a buffer of independent steps, solve, update, log."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from ..agent import Batch, PPOAgent, config_hash, load_checkpoint, save_checkpoint
from ..channel import ChannelModel, ChannelSet
from ..env import (EnvConfig, HybridRISEnv, build_state, decode_action, expand_action,
                   inner_problem, policy_head_sizes, reward_from)
from ..inner import solve
from .config import ExperimentConfig, env_config, ppo_config, to_dict

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["iteration", "mean_reward", "mean_energy_mj", "infeasible_frac",
                  "active_ratio", "passive_ratio", "idle_ratio", "mean_rho", "mean_t2_s",
                  "entropy", "clip_frac", "value_loss"]
CHECKPOINT = "checkpoint.bin"
METRICS = "metrics.csv"


class InfeasibleEverywhere(RuntimeError):
    """Every evaluated channel draw was infeasible for every action tried."""


def step_summary(records) -> dict:
    """Aggregate (reward, modes, solution) triples into the logged quantities."""
    rewards = np.array([r for r, _, _ in records])
    feas = [s for _, _, s in records if s.feasible]
    counts = np.array([m.counts() for _, m, _ in records], dtype=float).sum(axis=0)
    total = counts.sum()
    rhos = np.concatenate([m.rho[m.active_mask] for _, m, _ in records])
    return {
        "mean_reward": float(rewards.mean()),
        "mean_energy_mj": float(np.mean([s.objective for s in feas]) * 1e3) if feas else math.nan,
        "infeasible_frac": 1.0 - len(feas) / len(records),
        "active_ratio": counts[0] / total,
        "passive_ratio": counts[1] / total,
        "idle_ratio": counts[2] / total,
        "mean_rho": float(rhos.mean()) if rhos.size else math.nan,
        "mean_t2_s": float(np.mean([s.t[1].sum() for s in feas])) if feas else math.nan,
    }


def heldout_channels(env_cfg: EnvConfig, n: int, seed: int) -> list[ChannelSet]:
    """Fixed evaluation draws, independent of the training seed."""
    rng = np.random.default_rng(seed)
    model = ChannelModel(env_cfg.geometry, env_cfg.links)
    return [model.sample(rng) for _ in range(n)]


def evaluate_policy(agent: PPOAgent | None, env_cfg: EnvConfig, channels: list[ChannelSet],
                    backend: str | None = None) -> tuple[list, np.ndarray]:
    """Greedy (argmax per head) evaluation; never touches weights or normalizer.

    Returns (records, per-draw F* in J with inf for infeasible draws).
    """
    N = env_cfg.n_elements
    states = np.array([build_state(c, env_cfg.state_layout) for c in channels])
    heads = policy_head_sizes(env_cfg.scheme, N, env_cfg.shared_rho)
    if agent is None or not heads:
        actions = np.zeros((len(channels), len(heads)), dtype=np.int64)
    else:
        _, actions, _, _ = agent.act(states, None, greedy=True, update_norm=False)
    records = []
    for ch, a in zip(channels, actions):
        modes = decode_action(expand_action(a, env_cfg.scheme, N, env_cfg.shared_rho),
                              env_cfg.scheme)
        sol = solve(inner_problem(ch, modes, env_cfg), backend=backend)
        records.append((reward_from(sol, env_cfg.e_ref, env_cfg.kappa), modes, sol))
    energy = np.array([s.objective if s.feasible else math.inf for _, _, s in records])
    return records, energy


@dataclass
class TrainResult:
    agent: PPOAgent
    metrics: list[dict]
    checkpoint: str | None
    out_dir: str | None


def _rng_states(*rngs):
    return [r.bit_generator.state for r in rngs]


def _restore(rng, state):
    rng.bit_generator.state = state


def run_train(cfg: ExperimentConfig, seed: int, out_dir: str | None = None,
              scheme: str | None = None, iterations: int | None = None, resume: bool = False,
              backend: str | None = None, progress=None) -> TrainResult:
    """Algorithm loop: for each iteration collect ``buffer_size`` independent
    steps (normalizing states as they arrive), solve the inner program per
    step, then run PPO epochs on the buffer and clear it.
    """
    env_cfg = env_config(cfg, scheme)
    pcfg = ppo_config(cfg)
    iterations = cfg.train.iterations if iterations is None else iterations
    N = env_cfg.n_elements
    heads = policy_head_sizes(env_cfg.scheme, N, env_cfg.shared_rho)
    ss = np.random.SeedSequence(seed)
    env_rng, init_rng, act_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    env = HybridRISEnv(env_cfg, env_rng, backend=backend)
    chash = config_hash({"config": to_dict(cfg), "scheme": env_cfg.scheme, "seed": seed})

    agent = PPOAgent(env_cfg.state_dim, heads, pcfg, init_rng)
    start, metrics = 0, []
    ckpt_path = os.path.join(out_dir, CHECKPOINT) if out_dir else None
    metrics_path = os.path.join(out_dir, METRICS) if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if resume and ckpt_path and os.path.exists(ckpt_path):
        agent, header = load_checkpoint(ckpt_path)
        if header["config_hash"] != chash:
            raise ValueError(f"{ckpt_path} was written by a different config")
        start = header["step"]
        for r, st in zip((env_rng, act_rng), header["meta"]["rng"]):
            _restore(r, st)
        if os.path.exists(metrics_path):
            with open(metrics_path) as f:
                metrics = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]
            metrics = metrics[:start]
    if metrics_path:
        with open(metrics_path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
            w.writeheader()
            for row in metrics:
                w.writerow(row)

    def checkpoint(step):
        if ckpt_path:
            save_checkpoint(ckpt_path, agent, step, chash,
                            {"rng": _rng_states(env_rng, act_rng), "scheme": env_cfg.scheme})

    B = pcfg.buffer_size
    any_feasible = False
    for it in range(start, iterations):
        channels = [env.draw() for _ in range(B)]
        raw = np.array([build_state(c, env_cfg.state_layout) for c in channels])
        states, actions, logp, values = agent.act(raw, act_rng)
        records = []
        for ch, a in zip(channels, actions):
            records.append(env.evaluate(ch, expand_action(a, env_cfg.scheme, N, env_cfg.shared_rho)))
        rewards = np.array([r for r, _, _ in records])
        batch = Batch(states, actions, logp, rewards, values)
        agent.finish(batch, next_values=np.append(values[1:], 0.0))
        diag = agent.update(batch, act_rng)
        row = {"iteration": it + 1, **step_summary(records),
               "entropy": diag.get("entropy", 0.0), "clip_frac": diag.get("clip_frac", 0.0),
               "value_loss": diag.get("value_loss", math.nan)}
        any_feasible |= row["infeasible_frac"] < 1.0
        metrics.append(row)
        if metrics_path:
            with open(metrics_path, "a", newline="") as f:
                csv.DictWriter(f, fieldnames=METRIC_COLUMNS).writerow(row)
        if cfg.train.checkpoint_every and (it + 1) % cfg.train.checkpoint_every == 0:
            checkpoint(it + 1)
        if progress:
            progress(row)
        log.debug("iter %d reward %.4f infeasible %.3f", it + 1, row["mean_reward"],
                  row["infeasible_frac"])
    checkpoint(iterations)
    if out_dir:
        with open(os.path.join(out_dir, "run.json"), "w") as f:
            json.dump({"seed": seed, "scheme": env_cfg.scheme, "iterations": iterations,
                       "config_hash": chash}, f, indent=2)
    if iterations > start and not any_feasible:
        raise InfeasibleEverywhere("no training step was feasible")
    return TrainResult(agent, metrics, ckpt_path, out_dir)
