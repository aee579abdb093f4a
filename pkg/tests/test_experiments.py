import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from sorq.exact import q_value_iteration, value_iteration
from sorq.experiments import (
    ExperimentConfig,
    average_error,
    policy_difference,
    resolve_w,
    run_experiment,
    w_sweep,
    write_experiment_csvs,
)
from sorq.learn import LearnerConfig, StepSchedule
from sorq.mdp import generate_random_mdp
from sorq.rng import MDP_STREAM, derive_seed

from conftest import seeded_mdp


def small_cfg(**kw):
    learner = LearnerConfig(schedule=StepSchedule("polynomial", 1.0, 1.0), total_steps=2000, record_every=100)
    base = dict(num_mdps=4, learner=learner, master_seed=3, w_values=(1.0, "midpoint", "w_star"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_average_error_singleton():
    assert average_error([0.5]) == 0.5


def test_average_error_pair():
    assert average_error([0, 1]) == 0.5


def test_average_error_matches_summation():
    values = np.random.default_rng(0).uniform(0, 3, 100).tolist()
    total = 0.0
    for x in values:
        total += x
    assert average_error(values) == pytest.approx(total / 100, rel=1e-14)


def test_average_error_empty():
    with pytest.raises(ValueError):
        average_error([])


def test_policy_difference_zero_for_oracle():
    mdp = seeded_mdp(4)
    from sorq.exact import optimal_action_sets

    q = q_value_iteration(mdp, tol=1e-10).solution
    assert policy_difference(q, optimal_action_sets(q, 2e-10)) == 0


def test_policy_difference_counts_one_state():
    q = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    best = [frozenset({0}), frozenset({0}), frozenset({0, 1})]
    assert policy_difference(q, best) == 1


def test_policy_difference_shape_mismatch():
    with pytest.raises(ValueError):
        policy_difference(np.zeros((3, 2)), [frozenset({0})])


def test_resolve_w():
    assert resolve_w("w_star", 1.2) == (1.2, False)
    assert resolve_w("midpoint", 1.2) == (1.1, False)
    assert resolve_w(1.0, 1.2) == (1.0, False)
    assert resolve_w(5.0, 1.2) == (1.2, True)
    with pytest.raises(ValueError):
        resolve_w(0.0, 1.2)


def test_config_rejects_bad_tokens():
    with pytest.raises(ValueError):
        ExperimentConfig(w_values=("best",))
    with pytest.raises(ValueError):
        ExperimentConfig(num_mdps=0)
    with pytest.raises(ValueError):
        ExperimentConfig(algorithms=())
    with pytest.raises(ValueError):
        ExperimentConfig(algorithms=("sor_q",), w_values=())


def test_default_arms():
    assert [a.name for a in ExperimentConfig().arms()] == ["q", "sorq@w_star"]


def test_zero_step_degenerate():
    cfg = small_cfg(num_mdps=1, learner=LearnerConfig(total_steps=0))
    summary = run_experiment(cfg)
    mdp = generate_random_mdp(replace(cfg.generator, seed=derive_seed(derive_seed(3, 0), MDP_STREAM)))
    v = value_iteration(mdp, tol=cfg.oracle_tol).solution
    for arm in summary.arms:
        assert summary.curves[arm.name].tolist() == [np.max(np.abs(v))]
        assert summary.final_avg_error[arm.name] == np.max(np.abs(v))
    assert summary.records[0].v_star_norm == np.max(np.abs(v))


def test_experiment_is_deterministic():
    a, b = run_experiment(small_cfg()), run_experiment(small_cfg())
    for name in a.curves:
        assert a.curves[name].tobytes() == b.curves[name].tobytes()
    assert a.avg_policy_difference == b.avg_policy_difference


def test_parallel_matches_sequential():
    seq, par = run_experiment(small_cfg()), run_experiment(small_cfg(), jobs=3)
    for name in seq.curves:
        assert seq.curves[name].tobytes() == par.curves[name].tobytes()
    assert [r.instance_seed for r in seq.records] == [r.instance_seed for r in par.records]


def test_adding_instances_keeps_earlier_ones():
    few, more = run_experiment(small_cfg(num_mdps=2)), run_experiment(small_cfg(num_mdps=4))
    for r_few, r_more in zip(few.records, more.records):
        assert r_few.instance_seed == r_more.instance_seed
        assert r_few.arms["q"].curve.tobytes() == r_more.arms["q"].curve.tobytes()


def test_curve_shape_and_sign():
    summary = run_experiment(small_cfg())
    for curve in summary.curves.values():
        assert len(curve) == 2000 // 100 + 1
        assert np.all(np.isfinite(curve)) and np.all(curve >= 0)
    assert summary.steps.tolist() == list(range(0, 2001, 100))


def test_w_one_arm_equals_standard():
    summary = run_experiment(small_cfg())
    assert summary.curves["sorq@1"].tobytes() == summary.curves["q"].tobytes()


def test_average_is_mean_of_instances():
    summary = run_experiment(small_cfg())
    finals = [r.arms["sorq@w_star"].final_error for r in summary.records]
    assert summary.final_avg_error["sorq@w_star"] == pytest.approx(math.fsum(finals) / 4, rel=1e-15)


def test_clamping_is_recorded():
    summary = run_experiment(small_cfg(w_values=(1.5,)))
    assert len(summary.clamps) == 4
    for r in summary.records:
        assert r.arms["sorq@1.5"].w == r.w_star


def test_w_sweep_reduction():
    cfg = small_cfg()
    sweep = w_sweep(cfg, [1.0])
    standard = run_experiment(replace(cfg, algorithms=("standard_q",)))
    assert sweep[0][0] == 1.0
    assert sweep[0][1].tobytes() == standard.curves["q"].tobytes()
    with pytest.raises(ValueError):
        w_sweep(cfg, [])


def test_failure_names_instance(monkeypatch):
    import sorq.experiments as ex

    def boom(*args, **kw):
        raise FloatingPointError("synthetic")

    monkeypatch.setattr(ex, "run_learner", boom)
    with pytest.raises(RuntimeError, match=r"instance 0 \(instance seed \d+\)"):
        run_experiment(small_cfg(num_mdps=1))


def test_csv_outputs(tmp_path):
    summary = run_experiment(small_cfg())
    paths = write_experiment_csvs(summary, tmp_path)
    with open(paths[0]) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["arm", "w", "step", "avg_error"]
    assert len(rows) == 4 * 21
    assert {r["w"] for r in rows} == {"1", "midpoint", "w_star"}
    with open(paths[1]) as fh:
        per = list(csv.DictReader(fh))
    assert list(per[0]) == ["mdp_index", "instance_seed", "w_star", "arm", "final_error", "policy_mismatch"]
    assert len(per) == 4 * 4
    with open(paths[2]) as fh:
        table = list(csv.DictReader(fh))
    assert [r["arm"] for r in table] == ["q", "sorq@1", "sorq@midpoint", "sorq@w_star"]
    assert float(table[3]["final_avg_error"]) == summary.final_avg_error["sorq@w_star"]
    assert b"\r\n" not in (tmp_path / "summary.csv").read_bytes()
