"""Batch comparison of the learners over many random MDPs.

Each instance m gets a seed derived from the master seed and m alone. That
seed feeds two independent streams, one to generate the MDP and one for the
learners' sample path. Every arm on an instance replays the same path, so the
comparison across algorithms and relaxation factors is paired.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

import numpy as np

from .exact import greedy_policy, optimal_action_sets, q_value_iteration, value_iteration, w_star
from .learn import LearnerConfig, StepSchedule, run_learner
from .mdp import GeneratorConfig, QTable, generate_random_mdp
from .rng import LEARNER_STREAM, MDP_STREAM, check_seed, derive_seed

log = logging.getLogger(__name__)

# A relaxation factor: a number, or a token resolved against each instance's w*.
WValue = Union[float, str]
W_TOKENS = ("w_star", "midpoint")

# Harmonic per-pair steps 1 / (count + 1). With slower-decaying steps (exponent
# 0.7) the learners sit in the noise-dominated regime after 1e5 steps and the
# ordering between arms can flip; see README.
PROTOCOL_SCHEDULE = StepSchedule("polynomial", c0=1.0, exponent=1.0)


def resolve_w(value: WValue, w_max: float) -> tuple[float, bool]:
    """Resolve ``value`` for an instance with w* = ``w_max``; returns (w, clamped)."""
    if value == "w_star":
        return w_max, False
    if value == "midpoint":
        return (1.0 + w_max) / 2.0, False
    w = float(value)
    if not w > 0:
        raise ValueError(f"relaxation factor must be positive, got {w}")
    if w > w_max:
        return w_max, True
    return w, False


def w_label(value: WValue) -> str:
    return value if isinstance(value, str) else format(float(value), ".17g")


class Arm(NamedTuple):
    name: str
    algorithm: str
    w: WValue


@dataclass(frozen=True)
class ExperimentConfig:
    num_mdps: int = 100
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    learner: LearnerConfig = field(
        default_factory=lambda: LearnerConfig(schedule=PROTOCOL_SCHEDULE)
    )
    algorithms: tuple[str, ...] = ("standard_q", "sor_q")
    w_values: tuple[WValue, ...] = ("w_star",)
    master_seed: int = 0
    oracle_tol: float = 1e-8

    def __post_init__(self):
        if self.num_mdps < 1:
            raise ValueError("num_mdps must be at least 1")
        if not self.algorithms:
            raise ValueError("no algorithms configured")
        if "sor_q" in self.algorithms and not self.w_values:
            raise ValueError("sor_q configured with an empty w list")
        for value in self.w_values:
            if isinstance(value, str) and value not in W_TOKENS:
                raise ValueError(f"unknown w token {value!r}; use a number or one of {W_TOKENS}")
        if not self.oracle_tol > 0:
            raise ValueError("oracle_tol must be positive")
        check_seed(self.master_seed)

    def arms(self) -> list[Arm]:
        arms = []
        for algorithm in self.algorithms:
            if algorithm == "standard_q":
                arms.append(Arm("q", "standard_q", 1.0))
            elif algorithm == "sor_q":
                arms += [Arm(f"sorq@{w_label(w)}", "sor_q", w) for w in self.w_values]
            else:
                raise ValueError(f"unknown algorithm {algorithm!r}")
        names = [arm.name for arm in arms]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate arms: {names}")
        return arms


@dataclass(frozen=True)
class ArmResult:
    w: float
    clamped: bool
    curve: np.ndarray
    final_error: float
    policy_mismatch: int


@dataclass(frozen=True)
class InstanceRecord:
    index: int
    instance_seed: int
    w_star: float
    v_star_norm: float
    arms: dict[str, ArmResult]


@dataclass(frozen=True)
class ExperimentSummary:
    arms: list[Arm]
    steps: np.ndarray
    curves: dict[str, np.ndarray]
    final_avg_error: dict[str, float]
    avg_policy_difference: dict[str, float]
    records: list[InstanceRecord]

    @property
    def clamps(self) -> list[tuple[int, str]]:
        return [(r.index, name) for r in self.records for name, a in r.arms.items() if a.clamped]


def average_error(errors_per_mdp) -> float:
    errors = list(errors_per_mdp)
    if not errors:
        raise ValueError("average_error of an empty list")
    return math.fsum(errors) / len(errors)


def policy_difference(learned_q: QTable, optimal_actions: list[frozenset[int]]) -> int:
    """Number of states whose greedy learned action is not an optimal action."""
    learned_q = np.asarray(learned_q)
    if learned_q.ndim != 2 or learned_q.shape[0] != len(optimal_actions):
        raise ValueError(
            f"Q-table shape {learned_q.shape} does not match {len(optimal_actions)} states"
        )
    policy = greedy_policy(learned_q)
    return sum(int(a) not in best for a, best in zip(policy, optimal_actions))


def _run_instance(cfg: ExperimentConfig, arms: list[Arm], m: int) -> InstanceRecord:
    instance_seed = derive_seed(cfg.master_seed, m)
    try:
        mdp = generate_random_mdp(
            replace(cfg.generator, seed=derive_seed(instance_seed, MDP_STREAM))
        )
        v_sol = value_iteration(mdp, 1.0, tol=cfg.oracle_tol)
        q_sol = q_value_iteration(mdp, 1.0, tol=cfg.oracle_tol)
        if not (v_sol.converged and q_sol.converged):
            raise RuntimeError("oracle did not converge")
        v_star = v_sol.solution
        best = optimal_action_sets(q_sol.solution, 2 * cfg.oracle_tol)
        w_max = w_star(mdp)
        learner_seed = derive_seed(instance_seed, LEARNER_STREAM)

        results = {}
        counts = None
        for arm in arms:
            w, clamped = resolve_w(arm.w, w_max)
            if clamped:
                log.warning("instance %d: w=%s clamped to w*=%r for arm %s", m, arm.w, w_max, arm.name)
            learner_cfg = replace(cfg.learner, algorithm=arm.algorithm, w=w, seed=learner_seed)
            run = run_learner(mdp, learner_cfg, v_star)
            if counts is None:
                counts = run.state.visit_counts
            elif not np.array_equal(counts, run.state.visit_counts):
                raise RuntimeError(f"arm {arm.name} saw a different sample path")
            results[arm.name] = ArmResult(
                w,
                clamped,
                run.trace.errors,
                float(run.trace.errors[-1]),
                policy_difference(run.state.q, best),
            )
    except Exception as exc:
        raise RuntimeError(f"MDP instance {m} (instance seed {instance_seed}) failed: {exc}") from exc
    return InstanceRecord(m, instance_seed, w_max, float(np.max(np.abs(v_star))), results)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentSummary:
    """Run every arm on ``cfg.num_mdps`` instances and average the error curves."""
    arms = cfg.arms()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda m: _run_instance(cfg, arms, m), range(cfg.num_mdps)))
    else:
        records = [_run_instance(cfg, arms, m) for m in range(cfg.num_mdps)]

    total, every = cfg.learner.total_steps, cfg.learner.record_every
    steps = np.arange(0, total + 1, every)
    if total % every:
        steps = np.append(steps, total)

    curves, final, policy = {}, {}, {}
    for arm in arms:
        stacked = np.array([r.arms[arm.name].curve for r in records])
        curves[arm.name] = np.array([average_error(col) for col in stacked.T])
        final[arm.name] = float(curves[arm.name][-1])
        policy[arm.name] = average_error(r.arms[arm.name].policy_mismatch for r in records)
    return ExperimentSummary(arms, steps, curves, final, policy, records)


def w_sweep(cfg: ExperimentConfig, w_values, jobs: int = 1) -> list[tuple[WValue, np.ndarray]]:
    """SOR Q-learning error curves for each w, all on the same sample paths."""
    w_values = tuple(w_values)
    if not w_values:
        raise ValueError("empty w list")
    summary = run_experiment(replace(cfg, algorithms=("sor_q",), w_values=w_values), jobs)
    return [(arm.w, summary.curves[arm.name]) for arm in summary.arms]


def _g(x: float) -> str:
    return format(float(x), ".17g")


def write_experiment_csvs(summary: ExperimentSummary, outdir: str | os.PathLike) -> list[str]:
    """Write ``error_curves.csv``, ``per_mdp.csv`` and ``summary.csv``; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    curves = ["arm,w,step,avg_error"]
    for arm in summary.arms:
        label = w_label(arm.w)
        for step, e in zip(summary.steps.tolist(), summary.curves[arm.name].tolist()):
            curves.append(f"{arm.name},{label},{step},{_g(e)}")

    per_mdp = ["mdp_index,instance_seed,w_star,arm,final_error,policy_mismatch"]
    for r in summary.records:
        for arm in summary.arms:
            a = r.arms[arm.name]
            per_mdp.append(
                f"{r.index},{r.instance_seed},{_g(r.w_star)},{arm.name},{_g(a.final_error)},{a.policy_mismatch}"
            )

    table = ["arm,w,final_avg_error,avg_policy_difference"]
    for arm in summary.arms:
        table.append(
            f"{arm.name},{w_label(arm.w)},{_g(summary.final_avg_error[arm.name])},"
            f"{_g(summary.avg_policy_difference[arm.name])}"
        )

    paths = []
    for name, rows in (("error_curves.csv", curves), ("per_mdp.csv", per_mdp), ("summary.csv", table)):
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")
        paths.append(path)
    return paths
