from __future__ import annotations

import numpy as np
import pytest

from sorq.learn import (
    ErrorTrace,
    LearnerRun,
    LearnerState,
    Transition,
    behavior_next_action,
    q_learning_step,
    sor_q_learning_step,
    step_size,
    value_error,
)
from sorq.mdp import GeneratorConfig, Mdp, generate_random_mdp, sample_transition
from sorq.rng import make_rng


def one_state_mdp(reward=1.0, discount=0.9, actions=1) -> Mdp:
    p = np.ones((1, actions, 1))
    r = np.full((1, actions, 1), reward, dtype=float)
    return Mdp(p, r, discount)


def seeded_mdp(seed: int, **kw) -> Mdp:
    return generate_random_mdp(GeneratorConfig(seed=seed, **kw))


@pytest.fixture
def mdp10x5() -> Mdp:
    return seeded_mdp(1)


def reference_run(mdp: Mdp, cfg, oracle_v) -> LearnerRun:
    """Pure-Python learner built only from the public single-step operations."""
    sor = cfg.algorithm == "sor_q"
    q = np.full(mdp.shape, float(cfg.initial_q))
    counts = np.zeros(mdp.shape, dtype=np.int64)
    rng = make_rng(cfg.seed)
    steps, errors, history = [0], [value_error(oracle_v, q)], []
    i = 0
    for n in range(cfg.total_steps):
        a = behavior_next_action(mdp, i, rng)
        j, r = sample_transition(mdp, i, a, rng)
        t = Transition(i, a, r, j)
        g = step_size(cfg.schedule, int(counts[i, a]))
        if sor:
            history.append(sor_q_learning_step(q, t, g, cfg.w, mdp.discount))
        else:
            history.append(q_learning_step(q, t, g, mdp.discount))
        counts[i, a] += 1
        i = j
        if (n + 1) % cfg.record_every == 0 or n + 1 == cfg.total_steps:
            steps.append(n + 1)
            errors.append(value_error(oracle_v, q))
    trace = ErrorTrace(np.array(steps), np.array(errors))
    return LearnerRun(LearnerState(q, counts, i, cfg.total_steps), trace, np.array(history))


def evaluate_policy(mdp: Mdp, policy, tol=1e-13, max_iter=100_000) -> np.ndarray:
    """Iterate v = r_pi + discount * P_pi v, independent of the optimal-control operators."""
    idx = np.arange(mdp.num_states)
    p_pi = mdp.transition[idx, policy]
    r_pi = np.array([p_pi[i] @ mdp.reward[i, policy[i]] for i in idx])
    v = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        nxt = r_pi + mdp.discount * p_pi @ v
        if np.max(np.abs(nxt - v)) <= tol:
            return nxt
        v = nxt
    raise AssertionError("policy evaluation did not converge")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "test_acceptance" not in rep.nodeid:
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome.upper(), props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, outcome, detail in sorted(lines):
            terminalreporter.write_line(f"AC{crit:02d} {outcome:6s} {detail}")
