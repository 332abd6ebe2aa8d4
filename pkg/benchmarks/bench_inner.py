"""Time the inner solver on both kernels over the same random instances.

    python benchmarks/bench_inner.py [--n 200] [--users 2] [--seed 0]
"""
import argparse
import time

import numpy as np

from hybris.env import EnvConfig, default_geometry, inner_problem
from hybris.channel import ChannelModel
from hybris.inner import available_backends, solve
from hybris.sysmodel import ModeAssignment


def instances(n, users, seed):
    cfg = EnvConfig(default_geometry(n_elements=20, n_users=users))
    model = ChannelModel(cfg.geometry, cfg.links)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        ch = model.sample(rng)
        beta = rng.integers(0, 2, 20)
        alpha = rng.integers(0, 2, 20) * beta
        rho = np.where(alpha > 0, 10.0 * rng.integers(1, 11, 20), 1.0)
        out.append(inner_problem(ch, ModeAssignment(beta, alpha, rho), cfg))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--users", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    probs = instances(args.n, args.users, args.seed)
    results = {}
    for backend in available_backends():
        t0 = time.perf_counter()
        sols = [solve(p, backend=backend) for p in probs]
        dt = (time.perf_counter() - t0) / len(probs)
        results[backend] = sols
        steps = np.mean([s.newton_steps for s in sols])
        print(f"{backend:9s} {dt * 1e3:8.3f} ms/solve  {steps:6.1f} Newton steps")
    if len(results) == 2:
        a, b = results["python"], results["compiled"]
        same = all(x.status == y.status for x, y in zip(a, b))
        diff = max((abs(x.objective - y.objective) / x.objective
                    for x, y in zip(a, b) if x.feasible and y.feasible), default=0.0)
        print(f"status agreement: {same}; max relative objective difference {diff:.2e}")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
