"""Seed aggregation into plot-ready tidy CSVs (median and interquartile range).

Output files and their fixed column order:

convergence.csv      iteration, quantity, n_seeds, median, q25, q75
energy_vs_axis.csv   axis, value, scheme, n_seeds, median, q25, q75
ratio_vs_axis.csv    axis, value, scheme, mode, n_seeds, median, q25, q75
rho_t2_vs_axis.csv   axis, value, scheme, quantity, n_seeds, median, q25, q75
"""
from __future__ import annotations

import csv
import os
from collections import defaultdict

import numpy as np

from .sweep import SWEEP_COLUMNS, write_csv
from .train import METRIC_COLUMNS

CONVERGENCE_COLUMNS = ["iteration", "quantity", "n_seeds", "median", "q25", "q75"]
ENERGY_COLUMNS = ["axis", "value", "scheme", "n_seeds", "median", "q25", "q75"]
RATIO_COLUMNS = ["axis", "value", "scheme", "mode", "n_seeds", "median", "q25", "q75"]
RHO_T2_COLUMNS = ["axis", "value", "scheme", "quantity", "n_seeds", "median", "q25", "q75"]
CONVERGENCE_QUANTITIES = ["mean_reward", "mean_energy_mj", "infeasible_frac", "active_ratio",
                          "passive_ratio", "idle_ratio"]


class ReportError(ValueError):
    pass


def _read(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.DictReader(f)
        return list(r.fieldnames or []), list(r)


def _quantile(v: np.ndarray, q: float) -> float:
    # linear interpolation that keeps inf (infeasible) entries meaningful
    pos = q * (v.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, v.size - 1)
    frac = pos - lo
    if frac == 0 or v[lo] == v[hi]:
        return float(v[lo])
    return float(v[lo] + (v[hi] - v[lo]) * frac)


def _stats(vals) -> dict:
    v = np.sort(np.asarray(vals, dtype=float))
    v = v[~np.isnan(v)]
    if v.size == 0:
        return {"n_seeds": 0, "median": float("nan"), "q25": float("nan"), "q75": float("nan")}
    q25, med, q75 = (_quantile(v, q) for q in (0.25, 0.5, 0.75))
    return {"n_seeds": int(v.size), "median": float(med), "q25": float(q25), "q75": float(q75)}


def report(paths, out_dir) -> dict[str, str]:
    """Aggregate metrics files (per-seed training logs) and sweep files.

    Returns {table name: written path}. Empty input or unknown headers raise
    :class:`ReportError` and write nothing.
    """
    paths = list(paths)
    if not paths:
        raise ReportError("no input files")
    metrics, sweeps = [], []
    for p in paths:
        header, rows = _read(p)
        if header == METRIC_COLUMNS:
            metrics.append(rows)
        elif header == SWEEP_COLUMNS:
            sweeps.extend(rows)
        else:
            raise ReportError(f"{p}: header matches neither the metrics nor the sweep schema")
        if not rows:
            raise ReportError(f"{p}: no data rows")
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    if metrics:
        by_it = defaultdict(list)
        for rows in metrics:
            for r in rows:
                by_it[int(float(r["iteration"]))].append(r)
        out = []
        for it in sorted(by_it):
            for q in CONVERGENCE_QUANTITIES:
                out.append({"iteration": it, "quantity": q,
                            **_stats([float(r[q]) for r in by_it[it]])})
        written["convergence"] = os.path.join(out_dir, "convergence.csv")
        write_csv(written["convergence"], CONVERGENCE_COLUMNS, out)
    if sweeps:
        groups = defaultdict(list)
        for r in sweeps:
            groups[(r["axis"], float(r["value"]), r["scheme"])].append(r)
        energy, ratio, rho_t2 = [], [], []
        for (axis, value, scheme), rows in sorted(groups.items()):
            key = {"axis": axis, "value": value, "scheme": scheme}
            energy.append({**key, **_stats([float(r["median_energy_mj"]) for r in rows])})
            for mode in ("active", "passive", "idle"):
                ratio.append({**key, "mode": mode,
                              **_stats([float(r[f"{mode}_ratio"]) for r in rows])})
            for q in ("mean_rho", "mean_t2_s"):
                rho_t2.append({**key, "quantity": q, **_stats([float(r[q]) for r in rows])})
        for name, cols, data in (("energy_vs_axis", ENERGY_COLUMNS, energy),
                                 ("ratio_vs_axis", RATIO_COLUMNS, ratio),
                                 ("rho_t2_vs_axis", RHO_T2_COLUMNS, rho_t2)):
            written[name] = os.path.join(out_dir, f"{name}.csv")
            write_csv(written[name], cols, data)
    return written
