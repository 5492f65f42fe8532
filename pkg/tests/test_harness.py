"""Experiment harness: configs, paired runs, the hindsight oracle, outputs."""
import csv
import json
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from banditctrl import (ConfigError, CostFunction, DacClassParams,
                        ExperimentConfig, LinearSystem, LqrController,
                        best_dac_in_hindsight, config_from_dict,
                        counterfactual_dac_cost, grid_best_dac, horizon_ladder,
                        regret_report, run_experiment, simulate, solve_dare,
                        step, write_outputs)
from banditctrl.harness import (affine_replay, parse_algorithm, resolve_noise,
                                resolve_system, _auto_loss_bound)
from banditctrl.policies import project_dac_class


def _cfg(**kw):
    base = dict(name="cell", system="double-integrator", noise="iid-gaussian",
                cost="quadratic", algorithms=("lqr", "bpc"), horizon=80,
                runs=2, seed=0, memory=2)
    base.update(kw)
    return ExperimentConfig(**base)


def test_parse_algorithm():
    assert parse_algorithm("lqr") == ("lqr", None)
    assert parse_algorithm("gpc") == ("gpc", None)
    assert parse_algorithm("bpc") == ("bpc", None)
    assert parse_algorithm("bpc-sysid-moments") == ("bpc", "moments")
    assert parse_algorithm("lqr-sysid-least-squares") == ("lqr", "least-squares")
    for bad in ("dac", "bpc-sysid-spectral", "sysid-moments"):
        with pytest.raises(ConfigError):
            parse_algorithm(bad)


def test_config_validation():
    with pytest.raises(ConfigError):
        _cfg(algorithms=())
    with pytest.raises(ConfigError):
        _cfg(algorithms=("lqr", "lqr"))
    with pytest.raises(ConfigError):
        _cfg(seed=-1)
    with pytest.raises(ConfigError):
        _cfg(horizon=0)
    with pytest.raises(ConfigError):
        _cfg(jobs=0)


def test_config_from_dict_overlays_presets():
    cfg = config_from_dict({"preset": "toy", "horizon": 33})
    assert cfg.name == "toy"
    assert cfg.horizon == 33  # override wins over the preset value
    assert cfg.system == "double-integrator"
    with pytest.raises(ConfigError):
        config_from_dict({"preset": "toy", "horizont": 33})
    with pytest.raises(ConfigError):
        config_from_dict({"preset": "nope"})


def test_resolve_system_accepts_three_spellings():
    by_name = resolve_system("double-integrator")
    assert by_name.state_dim == 2
    inline = resolve_system({"a": [[0.5]], "b": [[1.0]], "w_bound": 2.0})
    assert inline.w_bound == 2.0
    sys = LinearSystem(a=[[0.5]], b=[[1.0]])
    assert resolve_system(sys) is sys
    with pytest.raises(ConfigError):
        resolve_system({"a": [[0.5]]})
    with pytest.raises(ConfigError):
        resolve_system({"a": [[0.5]], "b": [[1.0]], "q": [[1.0]]})
    with pytest.raises(ConfigError):
        resolve_system(17)


def test_resolve_noise_sugar_and_validation():
    gen = resolve_noise("walk-var-1-over-T", dim=2, horizon=100, bound=5.0)
    assert gen.kind == "random-walk" and gen.walk_std is None
    gen = resolve_noise("walk-std-0.3", dim=2, horizon=100, bound=5.0)
    assert gen.walk_std == 0.3
    gen = resolve_noise({"kind": "walk-std-0.3", "bound": 1.0}, 2, 100, 5.0)
    assert gen.walk_std == 0.3 and gen.bound == 1.0
    gen = resolve_noise("iid-gaussian", dim=2, horizon=100, bound=5.0)
    assert gen.bound == 5.0  # cap defaults to the system's disturbance bound
    with pytest.raises(ConfigError):
        resolve_noise({"walk_std": 0.1}, 2, 100, 5.0)
    with pytest.raises(ConfigError):
        resolve_noise({"kind": "zero", "seed": 4}, 2, 100, 5.0)
    with pytest.raises(ConfigError):
        resolve_noise(3.5, 2, 100, 5.0)


def test_simulate_matches_a_manual_lqr_loop():
    sys = resolve_system("double-integrator")
    sol = solve_dare(sys.a, sys.b)
    cost = CostFunction("quadratic")
    w = np.random.default_rng(0).standard_normal((31, 2))
    traj = simulate(sys, LqrController(sol.k), w, cost, 30)
    x = np.zeros(2)
    for t in range(31):
        u = -sol.k @ x
        assert_allclose(traj.actions[t], u, atol=1e-12)
        assert traj.costs[t] == pytest.approx(cost.value(x, u))
        x = step(sys, x, u, w[t])
    assert_allclose(traj.states[31], x, atol=1e-12)


def test_counterfactual_zero_tensor_is_the_lqr_rollout():
    sys = resolve_system("double-integrator")
    sol = solve_dare(sys.a, sys.b)
    cost = CostFunction("quadratic")
    w = np.random.default_rng(1).standard_normal((41, 2))
    series = counterfactual_dac_cost(sys, sol.k, np.zeros((1, 1, 2)), w, cost)
    traj = simulate(sys, LqrController(sol.k), w, cost, 40)
    assert_allclose(series, traj.costs, rtol=1e-12, atol=1e-12)


def test_affine_replay_agrees_with_the_plain_loop():
    """The oracle's affine decomposition and the naive replay are independent
    paths to the same per-round costs."""
    rng = np.random.default_rng(2)
    for n, m, h in ((1, 1, 1), (2, 1, 2), (3, 2, 2)):
        a = rng.standard_normal((n, n))
        a *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(a))), 1e-9)
        sys = LinearSystem(a=a, b=rng.standard_normal((n, m)))
        k = solve_dare(sys.a, sys.b).k
        params = DacClassParams(memory=h)
        m_t = project_dac_class(params, rng.standard_normal((h, m, n)))
        w = rng.standard_normal((41, n))
        p, phi, q, psi = affine_replay(sys, k, w, h)
        vec = m_t.reshape(-1)
        xs = p + phi @ vec
        us = q + psi @ vec
        for kind in CostFunction.KINDS:
            cost = CostFunction(kind)
            loop = counterfactual_dac_cost(sys, k, m_t, w, cost)
            assert_allclose(cost.value_batch(xs, us), loop, atol=1e-9)


def test_auto_loss_bound_rule():
    sys = resolve_system("double-integrator")
    sol = solve_dare(sys.a, sys.b)
    cost = CostFunction("quadratic")
    w = np.random.default_rng(3).standard_normal((61, 2))
    series = counterfactual_dac_cost(sys, sol.k, np.zeros((1, 1, 2)), w, cost)
    bound = _auto_loss_bound(sys, sol.k, w, cost, 60)
    assert bound == pytest.approx(max(1.0, 2.0 * np.max(series)))
    assert _auto_loss_bound(sys, sol.k, np.zeros((61, 2)), cost, 60) == 1.0


def test_oracle_matches_grid_on_a_scalar_cell():
    sys = LinearSystem(a=[[0.9]], b=[[1.0]])
    k = solve_dare(sys.a, sys.b).k
    params = DacClassParams(memory=1, kappa=1.0, gamma=0.5, kappa_b=1.0)
    w = np.random.default_rng(4).standard_normal((41, 1))
    cost = CostFunction("quadratic")
    oracle = best_dac_in_hindsight(sys, k, w, cost, params)
    m_grid, obj_grid = grid_best_dac(sys, k, w, cost, params, spacing=1e-3)
    assert oracle.converged
    assert abs(oracle.objective - obj_grid) <= 1e-2
    assert_allclose(oracle.m_star, m_grid, atol=5e-3)


def test_oracle_with_zero_noise_returns_the_zero_tensor():
    sys = resolve_system("double-integrator")
    k = solve_dare(sys.a, sys.b).k
    oracle = best_dac_in_hindsight(sys, k, np.zeros((51, 2)),
                                   CostFunction("quadratic"),
                                   DacClassParams(memory=2))
    assert oracle.converged
    assert np.all(oracle.m_star == 0.0)
    assert oracle.objective == 0.0


def test_grid_rejects_large_classes():
    sys = resolve_system("double-integrator")
    k = solve_dare(sys.a, sys.b).k
    with pytest.raises(ConfigError):
        grid_best_dac(sys, k, np.zeros((11, 2)), CostFunction("quadratic"),
                      DacClassParams(memory=2))  # dimension 4


def test_run_experiment_pairs_disturbances_and_reproduces():
    cfg = _cfg()
    rec1 = run_experiment(cfg)
    rec2 = run_experiment(cfg)
    for alg in cfg.algorithms:
        assert rec1.costs[alg].shape == (2, 81)
        assert np.array_equal(rec1.costs[alg], rec2.costs[alg])
    assert rec1.w_hashes == rec2.w_hashes
    assert len(set(rec1.w_hashes)) == cfg.runs  # seeds differ across runs
    for i in range(cfg.runs):
        lqr_w = rec1.trajectories["lqr"][i].disturbances
        bpc_w = rec1.trajectories["bpc"][i].disturbances
        assert np.array_equal(lqr_w, bpc_w)


def test_parallel_jobs_reproduce_the_serial_run():
    serial = run_experiment(_cfg(horizon=50))
    parallel = run_experiment(_cfg(horizon=50, jobs=2))
    for alg in ("lqr", "bpc"):
        assert np.array_equal(serial.costs[alg], parallel.costs[alg])


def test_record_cumulative_and_transient_skipping():
    rec = run_experiment(_cfg(skip_transient=True))
    cum = rec.cumulative("lqr")
    assert_allclose(cum, np.cumsum(rec.costs["lqr"], axis=1))
    totals = rec.total_costs("lqr")
    assert_allclose(totals, np.sum(rec.costs["lqr"][:, 2:], axis=1))


def test_summary_rows_are_plain_and_recompute():
    rec = run_experiment(_cfg(runs=3))
    rows = rec.summary_rows()
    assert [r["algorithm"] for r in rows] == ["lqr", "bpc"]
    json.dumps(rows)  # no numpy scalars allowed through
    for row in rows:
        totals = rec.total_costs(row["algorithm"])
        assert row["mean_total_cost"] == pytest.approx(np.mean(totals))
        expected_ci = 1.96 * np.std(totals, ddof=1) / np.sqrt(3)
        assert row["ci_half_width"] == pytest.approx(expected_ci)
        assert row["mean_final100_cost"] == pytest.approx(
            np.mean(rec.costs[row["algorithm"]][:, -100:]))


def test_lqr_regret_against_the_oracle_is_nonnegative():
    """M = 0 is in the comparator class, so the oracle can never cost more
    than plain LQR on the same disturbances."""
    rec = run_experiment(_cfg(algorithms=("lqr",), runs=3, oracle=True))
    regrets = rec.regrets()["lqr"]
    assert regrets.shape == (3,)
    assert np.all(regrets >= -1e-9)


def test_regret_report_structure():
    rec = run_experiment(_cfg(algorithms=("lqr", "bpc"), oracle=True))
    report = regret_report(rec)
    assert report["w_hashes"] == rec.w_hashes
    assert len(report["oracle"]["objectives"]) == 2
    entry = report["algorithms"]["lqr"]
    per_seed = np.array(entry["per_seed"])
    assert entry["mean_regret"] == pytest.approx(np.mean(per_seed))
    assert entry["regret_over_t34"] == pytest.approx(np.mean(per_seed) / 80**0.75)
    assert "bpc" in report["algorithms"]
    json.dumps(report)
    rec_plain = run_experiment(_cfg())
    with pytest.raises(ConfigError):
        regret_report(rec_plain)


def test_regrets_skip_sysid_algorithms():
    cfg = _cfg(system="double-integrator-scaled", horizon=120, runs=2,
               algorithms=("lqr", "lqr-sysid-moments"), oracle=True,
               sysid_budget=60, sysid_k=2, noise="zero")
    rec = run_experiment(cfg)
    assert set(rec.regrets()) == {"lqr"}


def test_sysid_cell_end_to_end():
    cfg = _cfg(system="double-integrator-scaled", horizon=160, runs=2,
               sysid_budget=80, sysid_k=2,
               algorithms=("lqr-sysid-moments", "bpc-sysid-moments"))
    rec = run_experiment(cfg)
    for alg in cfg.algorithms:
        assert rec.costs[alg].shape == (2, 161)
        reports = rec.sysid_reports[alg]
        assert len(reports) == 2
        assert reports[0]["method"] == "moments"
        assert reports[0]["err_a"] < 1.0
        assert "k_hat" in reports[0]
    rows = rec.summary_rows()
    json.dumps(rows)


def test_horizon_ladder_shapes():
    cfg = _cfg(algorithms=("lqr",), runs=2)
    rows = horizon_ladder(cfg, [40, 80])
    assert [r["horizon"] for r in rows] == [40, 80]
    for row in rows:
        assert "mean_regret" in row["lqr"]
        assert "regret_over_t34" in row["lqr"]


def test_write_outputs_files_and_idempotence(tmp_path):
    rec = run_experiment(_cfg(oracle=True))
    out = tmp_path / "cell"
    paths = write_outputs(rec, str(out))
    assert os.path.exists(paths["summary"])
    assert os.path.exists(paths["plot"])
    assert os.path.exists(paths["regret"])
    for p in paths["raw"]:
        assert os.path.exists(p)
    assert len(paths["raw"]) == 4  # 2 algorithms x 2 seeds
    with open(paths["summary"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "algorithm"
    assert len(rows) == 3  # header + one row per algorithm
    with open(paths["regret"]) as fh:
        json.load(fh)
    before = {p: open(p, "rb").read() for p in
              [paths["summary"], paths["plot"], paths["regret"]] + paths["raw"]}
    write_outputs(rec, str(out))
    for p, payload in before.items():
        assert open(p, "rb").read() == payload
    leftovers = [f for f in os.listdir(out) if f.endswith(".tmp")]
    assert leftovers == []


def test_summary_csv_unions_headers_across_algorithm_kinds(tmp_path):
    cfg = _cfg(system="double-integrator-scaled", horizon=120, runs=2,
               algorithms=("lqr", "lqr-sysid-moments"), oracle=True,
               sysid_budget=60, sysid_k=2)
    rec = run_experiment(cfg)
    out = tmp_path / "mixed"
    paths = write_outputs(rec, str(out))
    with open(paths["summary"]) as fh:
        rows = list(csv.DictReader(fh))
    by_alg = {r["algorithm"]: r for r in rows}
    assert by_alg["lqr"]["mean_regret"] != ""
    assert by_alg["lqr-sysid-moments"]["mean_regret"] == ""
