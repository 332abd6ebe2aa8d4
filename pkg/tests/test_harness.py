import csv
import math

import numpy as np
import pytest

from hybris.harness.cli import main
from hybris.harness.config import (ConfigError, ExperimentConfig, dump_config, env_config,
                                   from_dict, load_config, save_config, to_dict, with_axis_value)
from hybris.harness.report import ReportError, report
from hybris.harness.sweep import SWEEP_COLUMNS, run_oracle, run_sweep, write_csv
from hybris.harness.train import METRIC_COLUMNS, run_train, step_summary
from hybris.inner import InnerSolution
from hybris.sysmodel import ModeAssignment


def tiny_cfg(tmp_path, **train) -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg.system.n_elements = 4
    cfg.ppo.hidden = 16
    cfg.ppo.buffer_size = 32
    cfg.ppo.minibatch = 16
    cfg.ppo.epochs = 1
    cfg.ppo.optimizer = "adam"
    cfg.train.iterations = train.get("iterations", 20)
    cfg.train.checkpoint_every = 10
    cfg.train.eval_draws = 8
    cfg.output_dir = str(tmp_path / "runs")
    return cfg.validate()


def read_csv(path):
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        return r.fieldnames, list(r)


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig().validate()
    cfg.ppo.lr_actor = 3e-4
    cfg.seeds = [1, 2]
    p = tmp_path / "c.yaml"
    save_config(cfg, p)
    back = load_config(p)
    assert to_dict(back) == to_dict(cfg)
    assert dump_config(back) == dump_config(cfg)
    p.write_text("ppo:\n  lr_actor: 1e-4\n")
    assert load_config(p).ppo.lr_actor == 1e-4
    # powers live in dBm in the file and reach the model in W
    assert env_config(cfg).params.p_s == pytest.approx(10 ** 3.8 * 1e-3)


@pytest.mark.parametrize("data", [
    {"bogus": 1}, {"system": {"n_elemnts": 4}}, {"system": {"n_elements": 0}},
    {"env": {"scheme": "x"}}, {"ppo": {"optimizer": "rmsprop"}}, {"seeds": []},
    {"system": {"q_min": "lots"}}, {"geometry": {"bs": [1, 2]}}, {"sweep": {"axis": "x"}},
])
def test_config_errors(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_axis_values():
    cfg = ExperimentConfig().validate()
    assert with_axis_value(cfg, "n_elements", 8).system.n_elements == 8
    g = with_axis_value(cfg, "ris_distance", 12).geometry
    assert g.ris[0] == 12 and g.ehs[0] == 12
    assert cfg.geometry.ris[0] == 5.0
    with pytest.raises(ConfigError):
        with_axis_value(cfg, "nope", 1)


def test_ratio_counting():
    sol = InnerSolution(status="optimal", objective=1e-3, t=np.array([[0.5, 0.2], [0.1, 0.2]]))
    m = ModeAssignment([1, 1, 1, 0], [1, 1, 0, 0], [30.0, 50.0, 1.0, 1.0])
    s = step_summary([(-1.0, m, sol)])
    assert (s["active_ratio"], s["passive_ratio"], s["idle_ratio"]) == (0.5, 0.25, 0.25)
    assert s["mean_rho"] == 40.0
    assert s["mean_t2_s"] == pytest.approx(0.3)
    assert s["mean_energy_mj"] == pytest.approx(1.0)
    s2 = step_summary([(-10.0, ModeAssignment.idle(4), InnerSolution(status="infeasible"))])
    assert s2["infeasible_frac"] == 1.0 and math.isnan(s2["mean_energy_mj"])


def test_smoke_train_deterministic(tmp_path):
    cfg = tiny_cfg(tmp_path)
    a = run_train(cfg, 0, str(tmp_path / "a"))
    b = run_train(cfg, 0, str(tmp_path / "b"))
    header, rows = read_csv(tmp_path / "a" / "metrics.csv")
    assert header == METRIC_COLUMNS and len(rows) == 20
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    for k in a.agent.policy.net:
        np.testing.assert_array_equal(a.agent.policy.net[k], b.agent.policy.net[k])
    for r in rows:
        assert -cfg.env.kappa <= float(r["mean_reward"]) <= 0
        ratios = sum(float(r[k]) for k in ("active_ratio", "passive_ratio", "idle_ratio"))
        assert ratios == pytest.approx(1.0)


def test_resume_matches_uninterrupted(tmp_path):
    cfg = tiny_cfg(tmp_path)
    full = run_train(cfg, 3, str(tmp_path / "full"), iterations=20)
    run_train(cfg, 3, str(tmp_path / "part"), iterations=10)
    resumed = run_train(cfg, 3, str(tmp_path / "part"), iterations=20, resume=True)
    # equal up to summation-order rounding inside numpy reductions
    for k in full.agent.policy.net:
        np.testing.assert_allclose(full.agent.policy.net[k], resumed.agent.policy.net[k],
                                   rtol=1e-9, atol=1e-12)
    h1, r1 = read_csv(tmp_path / "full" / "metrics.csv")
    h2, r2 = read_csv(tmp_path / "part" / "metrics.csv")
    assert h1 == h2 and len(r1) == len(r2) == 20
    for a, b in zip(r1, r2):
        for k in h1:
            assert float(a[k]) == pytest.approx(float(b[k]), rel=1e-6, abs=1e-9, nan_ok=True)


def test_sweep_rows(tmp_path):
    cfg = tiny_cfg(tmp_path, iterations=2)
    rows = run_sweep(cfg, axis="es_power", values=[30.0, 35.0, 40.0, 45.0, 50.0],
                     schemes=["no-RIS"])
    assert len(rows) == 5
    header, back = read_csv(tmp_path / "runs" / "sweep_es_power.csv")
    assert header == SWEEP_COLUMNS and len(back) == 5
    hy = run_sweep(cfg, axis="q_min", values=[2.0], schemes=["hybrid"],
                   out_dir=str(tmp_path / "hy"))
    assert len(hy) == 1 and 0 <= hy[0]["infeasible_frac"] <= 1
    # evaluation from the saved checkpoint reproduces the row
    again = run_sweep(cfg, axis="q_min", values=[2.0], schemes=["hybrid"],
                      out_dir=str(tmp_path / "hy"), retrain=False)
    assert again == hy


def test_oracle_nesting_and_determinism(tmp_path):
    cfg = tiny_cfg(tmp_path)
    cfg.system.n_elements = 2
    cfg.train.eval_draws = 4
    rows = run_oracle(cfg, str(tmp_path / "o1"))
    run_oracle(cfg, str(tmp_path / "o2"))
    assert (tmp_path / "o1" / "oracle.csv").read_bytes() == (tmp_path / "o2" / "oracle.csv").read_bytes()
    for r in rows:
        h = r["hybrid_energy_mj"]
        for s in cfg.oracle.schemes:
            assert h <= r[f"{s}_energy_mj"] * (1 + 1e-9)
        assert h <= r["all_idle_energy_mj"] * (1 + 1e-9)


def test_report_medians(tmp_path):
    paths = []
    for seed, v in enumerate([1.0, 2.0, 3.0, 10.0]):
        row = {c: 0.0 for c in SWEEP_COLUMNS}
        row.update(axis="es_power", value=40.0, scheme="hybrid", seed=seed, median_energy_mj=v)
        p = tmp_path / f"s{seed}.csv"
        write_csv(p, SWEEP_COLUMNS, [row])
        paths.append(str(p))
    out = report(paths, tmp_path / "rep")
    _, rows = read_csv(out["energy_vs_axis"])
    assert len(rows) == 1
    r = rows[0]
    assert int(r["n_seeds"]) == 4
    assert float(r["median"]) == 2.5
    assert float(r["q25"]) == 1.75 and float(r["q75"]) == 4.75
    _, ratio = read_csv(out["ratio_vs_axis"])
    assert [x["mode"] for x in ratio] == ["active", "passive", "idle"]


def test_report_inf_and_convergence(tmp_path):
    rows = [{**{c: 0.0 for c in SWEEP_COLUMNS}, "axis": "q_min", "value": 5.0,
             "scheme": "no-RIS", "seed": s, "median_energy_mj": v}
            for s, v in enumerate([4.0, math.inf, math.inf])]
    write_csv(tmp_path / "s.csv", SWEEP_COLUMNS, rows)
    m = [{c: 1.0 for c in METRIC_COLUMNS} | {"iteration": i, "mean_reward": -i} for i in (1, 2)]
    write_csv(tmp_path / "m.csv", METRIC_COLUMNS, m)
    out = report([tmp_path / "s.csv", tmp_path / "m.csv"], tmp_path / "rep")
    _, e = read_csv(out["energy_vs_axis"])
    assert math.isinf(float(e[0]["median"]))
    _, c = read_csv(out["convergence"])
    rew = [x for x in c if x["quantity"] == "mean_reward"]
    assert [float(x["median"]) for x in rew] == [-1.0, -2.0]


def test_report_errors(tmp_path):
    with pytest.raises(ReportError):
        report([], tmp_path / "rep")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ReportError):
        report([bad], tmp_path / "rep")
    empty = tmp_path / "e.csv"
    write_csv(empty, SWEEP_COLUMNS, [])
    with pytest.raises(ReportError):
        report([empty], tmp_path / "rep")
    assert not (tmp_path / "rep").exists()


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tiny_cfg(tmp_path, iterations=2)
    p = tmp_path / "c.yaml"
    save_config(cfg, p)
    assert main(["train", "--config", str(p), "--seed", "1", "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "seed=1" / "checkpoint.bin").exists()
    assert (tmp_path / "t" / "seed=1" / "config.yaml").exists()
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense_key: 1\n")
    assert main(["train", "--config", str(bad)]) == 1
    assert main(["report", str(tmp_path / "missing.csv")]) == 1
    prob = tmp_path / "p.txt"
    prob.write_text("T = 1\nq_min = 1\np_max = 1\na = 1\nb = 1\n")
    assert main(["inner-solve", str(prob)]) == 0
    prob.write_text("T = 1\nq_min = 10\np_max = 1\na = 1\nb = 1\n")
    assert main(["inner-solve", str(prob)]) == 2
    # no-RIS with an unreachable target is infeasible on every draw
    cfg.system.q_min = 1000.0
    cfg.env.scheme = "no-RIS"
    cfg.oracle.schemes = ["no-RIS"]
    save_config(cfg, p)
    assert main(["oracle", "--config", str(p), "--draws", "2", "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()
