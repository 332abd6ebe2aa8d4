"""PPO actor-critic over a factored (multi-head categorical) action space.

Both networks are one-hidden-layer tanh MLPs written in numpy with explicit
backward passes. The actor's output layer is split into independent softmax
heads; a composite action is one index per head and its log-probability is the
sum of the per-head log-probabilities.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field, asdict

import numpy as np


class NonFiniteGradient(FloatingPointError):
    """Raised instead of applying an update whose gradient has NaN/inf entries."""


# ---------------------------------------------------------------- networks

def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    if rows == 0 or cols == 0:
        return np.zeros(shape)
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    # C order so a reloaded checkpoint takes the same BLAS path
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_mlp(in_dim: int, hidden: int, out_dim: int, out_gain: float,
             rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "W1": orthogonal((in_dim, hidden), math.sqrt(2.0), rng),
        "b1": np.zeros(hidden),
        "W2": orthogonal((hidden, out_dim), out_gain, rng),
        "b2": np.zeros(out_dim),
    }


def mlp_forward(params, x):
    h = np.tanh(x @ params["W1"] + params["b1"])
    return h @ params["W2"] + params["b2"], (x, h)


def mlp_backward(params, cache, dout):
    x, h = cache
    dh = (dout @ params["W2"].T) * (1.0 - h * h)
    return {"W1": x.T @ dh, "b1": dh.sum(axis=0), "W2": h.T @ dout, "b2": dout.sum(axis=0)}


@dataclass
class PolicyParams:
    """Actor weights plus the size of every categorical head."""

    net: dict[str, np.ndarray]
    head_sizes: tuple[int, ...]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.head_sizes)])


@dataclass
class ValueParams:
    net: dict[str, np.ndarray]


def init_policy(state_dim: int, head_sizes, hidden: int, rng: np.random.Generator) -> PolicyParams:
    head_sizes = tuple(int(k) for k in head_sizes)
    return PolicyParams(init_mlp(state_dim, hidden, sum(head_sizes), 0.01, rng), head_sizes)


def init_value(state_dim: int, hidden: int, rng: np.random.Generator) -> ValueParams:
    return ValueParams(init_mlp(state_dim, hidden, 1, 1.0, rng))


def _check_dim(net, states):
    if states.shape[-1] != net["W1"].shape[0]:
        raise ValueError(f"state dimension {states.shape[-1]} does not match "
                         f"network input {net['W1'].shape[0]}")


def head_log_softmax(logits: np.ndarray, head_sizes) -> list[np.ndarray]:
    out, k = [], 0
    for size in head_sizes:
        z = logits[:, k:k + size]
        z = z - z.max(axis=1, keepdims=True)
        out.append(z - np.log(np.exp(z).sum(axis=1, keepdims=True)))
        k += size
    return out


def policy_forward(policy: PolicyParams, states: np.ndarray) -> list[np.ndarray]:
    """Per-head probability tables, each (B, size)."""
    states = np.atleast_2d(states)
    _check_dim(policy.net, states)
    logits, _ = mlp_forward(policy.net, states)
    return [np.exp(lp) for lp in head_log_softmax(logits, policy.head_sizes)]


def value_forward(value: ValueParams, states: np.ndarray) -> np.ndarray:
    states = np.atleast_2d(states)
    _check_dim(value.net, states)
    return mlp_forward(value.net, states)[0][:, 0]


def sample_and_logprob(probs: list[np.ndarray], rng: np.random.Generator,
                       greedy: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Independent draw per head; returns (actions (B, H) ints, joint log-prob (B,))."""
    B = probs[0].shape[0]
    actions = np.empty((B, len(probs)), dtype=np.int64)
    logp = np.zeros(B)
    u = None if greedy else rng.random((B, len(probs)))
    for h, p in enumerate(probs):
        if greedy:
            idx = np.argmax(p, axis=1)
        else:
            cdf = np.cumsum(p, axis=1)
            idx = np.minimum((cdf < u[:, h:h + 1] * cdf[:, -1:]).sum(axis=1), p.shape[1] - 1)
        actions[:, h] = idx
        logp += np.log(p[np.arange(B), idx])
    return actions, logp


def rho_from_bucket(index):
    """Amplification bucket k in {0..9} -> rho = 10 (k + 1)."""
    return 10.0 * (np.asarray(index) + 1)


# ---------------------------------------------------------------- PPO pieces

def gae_advantages(rewards, values, next_values, gamma: float, lam: float, dones=None):
    """Returns (advantages, return targets) for one trajectory in time order.

    ``next_values[t]`` is v(s_{t+1}); ``dones[t]`` cuts the bootstrap.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    nv = np.asarray(next_values, dtype=float)
    notdone = 1.0 - (np.zeros_like(r) if dones is None else np.asarray(dones, dtype=float))
    if gamma == 0.0:
        adv = r - v
        return adv, r.copy()
    delta = r + gamma * nv * notdone - v
    adv = np.empty_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = delta[t] + gamma * lam * notdone[t] * acc
        adv[t] = acc
    return adv, adv + v


def clip(ratio, eps: float):
    return np.clip(ratio, 1.0 - eps, 1.0 + eps)


def head_entropy(probs: list[np.ndarray]) -> np.ndarray:
    """Sum of per-head entropies, per sample."""
    return sum(-(p * np.log(p)).sum(axis=1) for p in probs)


def actor_objective(policy: PolicyParams, states, actions, old_logp, adv, eps: float,
                    c2: float) -> tuple[float, dict, dict]:
    """Mean clipped surrogate plus c2 * entropy, its gradient and diagnostics.

    The returned gradient is of the objective to be *maximized*.
    """
    logits, cache = mlp_forward(policy.net, states)
    logps = head_log_softmax(logits, policy.head_sizes)
    B = states.shape[0]
    rows = np.arange(B)
    logp = sum(lp[rows, actions[:, h]] for h, lp in enumerate(logps))
    ratio = np.exp(logp - old_logp)
    clipped = clip(ratio, eps)
    unclipped_obj = ratio * adv
    surr = np.minimum(unclipped_obj, clipped * adv)
    ent = 0.0
    dlogits = np.empty_like(logits)
    # d surrogate / d logp: ratio * A where the unclipped branch is active
    g = np.where(unclipped_obj <= clipped * adv, ratio * adv, 0.0) / B
    k = 0
    for h, (lp, size) in enumerate(zip(logps, policy.head_sizes)):
        p = np.exp(lp)
        H = -(p * lp).sum(axis=1)
        ent = ent + H
        onehot = np.zeros_like(p)
        onehot[rows, actions[:, h]] = 1.0
        dH = -p * (lp + H[:, None])
        dlogits[:, k:k + size] = g[:, None] * (onehot - p) + (c2 / B) * dH
        k += size
    obj = float(surr.mean() + c2 * np.mean(ent))
    grads = mlp_backward(policy.net, cache, dlogits)
    diag = {"ratio": float(ratio.mean()),
            "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
            "entropy": float(np.mean(ent))}
    return obj, grads, diag


def critic_loss(value: ValueParams, states, targets) -> tuple[float, dict]:
    """0.5 * mean squared error and its gradient."""
    out, cache = mlp_forward(value.net, states)
    err = out[:, 0] - targets
    loss = 0.5 * float(np.mean(err ** 2))
    dout = (err / len(err))[:, None]
    return loss, mlp_backward(value.net, cache, dout)


# ---------------------------------------------------------------- optimizers

class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict, ascend: bool = False):
        s = self.lr if ascend else -self.lr
        for k in params:
            params[k] += s * grads[k]

    def state(self) -> dict:
        return {}

    def load(self, state: dict):
        pass


class Adam:
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict, ascend: bool = False):
        self.t += 1
        s = 1.0 if ascend else -1.0
        for k in params:
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            params[k] += s * self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state(self) -> dict:
        out = {f"m.{k}": v for k, v in self.m.items()}
        out.update({f"v.{k}": v for k, v in self.v.items()})
        out["t"] = np.array([float(self.t)])
        return out

    def load(self, state: dict):
        self.t = int(state.get("t", [0])[0])
        self.m = {k[2:]: v.copy() for k, v in state.items() if k.startswith("m.")}
        self.v = {k[2:]: v.copy() for k, v in state.items() if k.startswith("v.")}


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------- normalizer

@dataclass
class NormalizerState:
    mean: np.ndarray
    var: np.ndarray
    count: int = 0

    @classmethod
    def fresh(cls, dim: int) -> "NormalizerState":
        return cls(np.zeros(dim), np.zeros(dim), 0)


def normalize(x: np.ndarray, stats: NormalizerState, update: bool) -> np.ndarray:
    """Running z-score; with ``update`` the statistics first absorb x (one sample per row)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != stats.mean.shape[0]:
        raise ValueError("normalizer dimension mismatch")
    rows = np.atleast_2d(x)
    out = np.empty_like(rows)
    for i, row in enumerate(rows):
        if update:
            # Welford streaming update, population variance
            stats.count += 1
            delta = row - stats.mean
            stats.mean += delta / stats.count
            stats.var += (delta * (row - stats.mean) - stats.var) / stats.count
        out[i] = row if stats.count == 0 else (row - stats.mean) / np.sqrt(stats.var + 1e-8)
    return out if x.ndim == 2 else out[0]


# ---------------------------------------------------------------- agent

@dataclass
class PPOConfig:
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    clip_eps: float = 0.2
    entropy_coef: float = 1e-4
    gamma: float = 0.0
    gae_lambda: float = 0.95
    buffer_size: int = 512
    minibatch: int = 128
    epochs: int = 4
    hidden: int = 1024
    optimizer: str = "sgd"
    normalize_advantages: bool = True


@dataclass
class Batch:
    states: np.ndarray  # normalized
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    advantages: np.ndarray = field(default=None)
    returns: np.ndarray = field(default=None)


class PPOAgent:
    def __init__(self, state_dim: int, head_sizes, cfg: PPOConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.state_dim = state_dim
        self.policy = init_policy(state_dim, head_sizes, cfg.hidden, rng)
        self.value = init_value(state_dim, cfg.hidden, rng)
        self.norm = NormalizerState.fresh(state_dim)
        self.opt_pi = make_optimizer(cfg.optimizer, cfg.lr_actor)
        self.opt_v = make_optimizer(cfg.optimizer, cfg.lr_critic)

    @property
    def n_heads(self) -> int:
        return len(self.policy.head_sizes)

    def act(self, raw_states: np.ndarray, rng: np.random.Generator, greedy: bool = False,
            update_norm: bool = True):
        """Normalize, then sample (or argmax) one composite action per row."""
        s = normalize(np.atleast_2d(raw_states), self.norm, update=update_norm)
        if self.n_heads == 0:
            B = s.shape[0]
            return s, np.zeros((B, 0), dtype=np.int64), np.zeros(B), value_forward(self.value, s)
        probs = policy_forward(self.policy, s)
        actions, logp = sample_and_logprob(probs, rng, greedy=greedy)
        return s, actions, logp, value_forward(self.value, s)

    def finish(self, batch: Batch, next_values=None, dones=None) -> Batch:
        nv = np.zeros_like(batch.rewards) if next_values is None else next_values
        batch.advantages, batch.returns = gae_advantages(
            batch.rewards, batch.values, nv, self.cfg.gamma, self.cfg.gae_lambda, dones)
        return batch

    def update(self, batch: Batch, rng: np.random.Generator) -> dict:
        """Epochs of shuffled minibatch steps; returns averaged diagnostics."""
        cfg = self.cfg
        n = len(batch.rewards)
        diags = []
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                idx = order[start:start + cfg.minibatch]
                diags.append(self.ppo_update(batch.states[idx], batch.actions[idx],
                                             batch.logp[idx], batch.advantages[idx],
                                             batch.returns[idx]))
        return {k: float(np.mean([d[k] for d in diags])) for k in diags[0]} if diags else {}

    def ppo_update(self, states, actions, old_logp, adv, targets) -> dict:
        """One actor and one critic step. Both gradients are checked before
        either network moves, so a non-finite batch leaves the agent untouched."""
        cfg = self.cfg
        diag = {}
        g_pi = None
        if self.n_heads:
            a = np.asarray(adv, dtype=float)
            if not np.all(np.isfinite(a)):
                raise NonFiniteGradient("non-finite advantages; update aborted")
            if cfg.normalize_advantages and len(a) > 1:
                a = (a - a.mean()) / (a.std() + 1e-8)
            obj, g_pi, d = actor_objective(self.policy, states, actions, old_logp, a,
                                           cfg.clip_eps, cfg.entropy_coef)
            _require_finite(g_pi, "actor")
            diag.update(d, surrogate=obj)
        loss, g_v = critic_loss(self.value, states, targets)
        _require_finite(g_v, "critic")
        if g_pi is not None:
            self.opt_pi.step(self.policy.net, g_pi, ascend=True)
        self.opt_v.step(self.value.net, g_v)
        diag["value_loss"] = loss
        return diag


def _require_finite(grads: dict, name: str):
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"{name} gradient {k} has non-finite entries; update aborted")


# ---------------------------------------------------------------- checkpoint

CKPT_MAGIC = b"HYBRISCK"
CKPT_VERSION = 1


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable config."""
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _collect_arrays(agent: PPOAgent) -> dict[str, np.ndarray]:
    arrays = {f"policy.{k}": v for k, v in agent.policy.net.items()}
    arrays.update({f"value.{k}": v for k, v in agent.value.net.items()})
    arrays["norm.mean"] = agent.norm.mean
    arrays["norm.var"] = agent.norm.var
    arrays.update({f"opt_pi.{k}": v for k, v in agent.opt_pi.state().items()})
    arrays.update({f"opt_v.{k}": v for k, v in agent.opt_v.state().items()})
    return arrays


def save_checkpoint(path, agent: PPOAgent, step: int, cfg_hash: str, meta: dict | None = None):
    """Layout: magic (8 bytes) | version uint32 LE | header length uint32 LE |
    UTF-8 JSON header | float64 LE payload, arrays back to back in header order.
    """
    arrays = _collect_arrays(agent)
    entries, offset = [], 0
    for name, arr in arrays.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = {"step": int(step), "config_hash": cfg_hash, "head_sizes": list(agent.policy.head_sizes),
              "state_dim": agent.state_dim, "norm_count": agent.norm.count,
              "ppo": asdict(agent.cfg), "arrays": entries, "meta": meta or {}}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(hbytes)))
        f.write(hbytes)
        for arr in arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[PPOAgent, dict]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    payload = np.frombuffer(blob[16 + hlen:], dtype="<f8")
    arrays = {}
    for e in header["arrays"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        arrays[e["name"]] = payload[e["offset"]:e["offset"] + size].reshape(e["shape"]).copy()
    cfg = PPOConfig(**header["ppo"])
    agent = PPOAgent.__new__(PPOAgent)
    agent.cfg = cfg
    agent.state_dim = header["state_dim"]
    agent.policy = PolicyParams({k[7:]: v for k, v in arrays.items() if k.startswith("policy.")},
                                tuple(header["head_sizes"]))
    agent.value = ValueParams({k[6:]: v for k, v in arrays.items() if k.startswith("value.")})
    agent.norm = NormalizerState(arrays["norm.mean"], arrays["norm.var"], header["norm_count"])
    agent.opt_pi = make_optimizer(cfg.optimizer, cfg.lr_actor)
    agent.opt_v = make_optimizer(cfg.optimizer, cfg.lr_critic)
    agent.opt_pi.load({k[7:]: v for k, v in arrays.items() if k.startswith("opt_pi.")})
    agent.opt_v.load({k[6:]: v for k, v in arrays.items() if k.startswith("opt_v.")})
    return agent, header
