"""Asynchronous tabular learners: standard Q-learning and SOR Q-learning.

Both learners follow one unbroken trajectory under a uniform random behavior
policy. Each step draws one uniform for the action and one for the next state,
in that order, so two runs with the same seed see the same sample path
regardless of algorithm or relaxation factor.

The single-step functions below are the reference definitions. ``run_learner``
executes the same arithmetic inside a compiled loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .exact import check_relaxation
from .mdp import Mdp, QTable, ValueFunction, transition_cdf
from .rng import check_seed, make_rng

log = logging.getLogger(__name__)

ALGORITHMS = ("standard_q", "sor_q")

_CHUNK = 1 << 16


@dataclass(frozen=True)
class StepSchedule:
    """Per-(state, action) step sizes indexed by visit count.

    ``polynomial``: min(1, c0 / (count + 1) ** exponent). With exponent in
    (0.5, 1] the sum of steps diverges and the sum of squares converges.
    ``constant``: min(1, c0), which breaks the square-summability condition.
    """

    kind: str = "polynomial"
    c0: float = 1.0
    exponent: float = 0.7

    def __post_init__(self):
        if self.kind not in ("polynomial", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if self.kind == "polynomial" and not 0.5 < self.exponent <= 1.0:
            raise ValueError(f"exponent must lie in (0.5, 1], got {self.exponent}")

    @property
    def robbins_monro(self) -> bool:
        return self.kind == "polynomial"


def step_size(schedule: StepSchedule, visit_count: int) -> float:
    if visit_count < 0:
        raise ValueError("visit_count must be non-negative")
    if schedule.kind == "constant":
        return min(1.0, schedule.c0)
    return min(1.0, schedule.c0 / (visit_count + 1.0) ** schedule.exponent)


@dataclass(frozen=True)
class LearnerConfig:
    algorithm: str = "sor_q"
    w: float = 1.0
    schedule: StepSchedule = field(default_factory=StepSchedule)
    total_steps: int = 100_000
    seed: int = 0
    record_every: int = 100
    initial_q: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be positive")
        if not np.isfinite(self.initial_q):
            raise ValueError("initial_q must be finite")
        check_seed(self.seed)

    @property
    def effective_w(self) -> float:
        return 1.0 if self.algorithm == "standard_q" else float(self.w)


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int


@dataclass
class LearnerState:
    q: QTable
    visit_counts: np.ndarray
    current_state: int = 0
    steps_done: int = 0

    def unvisited(self) -> list[tuple[int, int]]:
        return [tuple(map(int, ia)) for ia in np.argwhere(self.visit_counts == 0)]


@dataclass(frozen=True)
class ErrorTrace:
    steps: np.ndarray
    errors: np.ndarray

    def to_csv(self) -> str:
        rows = ["step,error"]
        rows += [f"{s},{e:.17g}" for s, e in zip(self.steps.tolist(), self.errors.tolist())]
        return "\n".join(rows) + "\n"


class LearnerRun(NamedTuple):
    state: LearnerState
    trace: ErrorTrace
    # Value written by each step, only kept when requested.
    history: np.ndarray | None = None


def behavior_next_action(mdp: Mdp, state: int, rng: np.random.Generator) -> int:
    """Uniform random action; consumes one uniform variate."""
    return min(int(rng.random() * mdp.num_actions), mdp.num_actions - 1)


def q_learning_step(q: QTable, t: Transition, gamma: float, discount: float) -> float:
    """Standard Q-learning update of ``q[t.state, t.action]`` in place; returns the new value.

    Written as q + gamma * (target - q) so it is bit-identical to the SOR update at w = 1.
    """
    i, a = t.state, t.action
    target = t.reward + discount * q[t.next_state].max()
    q[i, a] = q[i, a] + gamma * (target - q[i, a])
    return q[i, a]


def sor_increment(q: QTable, t: Transition, w: float, discount: float) -> float:
    """The SOR correction w * (r + discount * max_b q(j,b)) + (1 - w) max_c q(i,c) - q(i,a)."""
    i, a = t.state, t.action
    target = t.reward + discount * q[t.next_state].max()
    return w * target + (1.0 - w) * q[i].max() - q[i, a]


def sor_q_learning_step(q: QTable, t: Transition, gamma: float, w: float, discount: float) -> float:
    """SOR Q-learning update of ``q[t.state, t.action]`` in place; returns the new value."""
    i, a = t.state, t.action
    q[i, a] = q[i, a] + gamma * sor_increment(q, t, w, discount)
    return q[i, a]


def value_error(v_star: ValueFunction, q: QTable) -> float:
    """||V* - max_a q(., a)|| in max norm."""
    return float(np.max(np.abs(np.asarray(v_star) - np.asarray(q).max(axis=1))))


@numba.njit(cache=True, nogil=True)
def _greedy_error(q, v_star):
    err = 0.0
    for i in range(q.shape[0]):
        m = q[i, 0]
        for b in range(1, q.shape[1]):
            if q[i, b] > m:
                m = q[i, b]
        d = abs(v_star[i] - m)
        if d > err:
            err = d
    return err


@numba.njit(cache=True, nogil=True)
def _advance(
    cdf, last_support, reward, discount, q, counts, state, start, uniforms,
    sor, w, polynomial, c0, exponent, record_every, v_star, errors, history,
):
    num_states, num_actions = q.shape
    keep_history = history.shape[0] > 0
    for k in range(uniforms.shape[0] // 2):
        n = start + k
        a = int(uniforms[2 * k] * num_actions)
        if a >= num_actions:
            a = num_actions - 1
        u = uniforms[2 * k + 1]
        j = 0
        while j < num_states and not u < cdf[state, a, j]:
            j += 1
        if j == num_states:
            j = last_support[state, a]
        r = reward[state, a, j]

        c = counts[state, a]
        if polynomial:
            g = c0 / (c + 1.0) ** exponent
        else:
            g = c0
        if g > 1.0:
            g = 1.0

        mj = q[j, 0]
        for b in range(1, num_actions):
            if q[j, b] > mj:
                mj = q[j, b]
        target = r + discount * mj
        if sor:
            mi = q[state, 0]
            for b in range(1, num_actions):
                if q[state, b] > mi:
                    mi = q[state, b]
            q[state, a] = q[state, a] + g * (w * target + (1.0 - w) * mi - q[state, a])
        else:
            q[state, a] = q[state, a] + g * (target - q[state, a])
        counts[state, a] = c + 1
        if keep_history:
            history[n] = q[state, a]
        state = j
        if (n + 1) % record_every == 0:
            errors[(n + 1) // record_every] = _greedy_error(q, v_star)
    return state


def run_learner(
    mdp: Mdp,
    cfg: LearnerConfig,
    oracle_v: ValueFunction,
    keep_history: bool = False,
) -> LearnerRun:
    """Run one learner along a single trajectory starting in state 0.

    The trace holds ||V* - max_a q(., a)|| at step 0, every ``record_every``
    steps, and at the final step.
    """
    v_star = np.asarray(oracle_v, dtype=np.float64)
    if v_star.shape != (mdp.num_states,):
        raise ValueError(f"oracle_v shape {v_star.shape} != ({mdp.num_states},)")
    sor = cfg.algorithm == "sor_q"
    w = cfg.effective_w
    if sor:
        w = check_relaxation(mdp, w)
        if w < 1.0:
            raise ValueError(f"SOR Q-learning requires w in [1, w*], got {w}")
    if not cfg.schedule.robbins_monro:
        log.warning("constant step size does not satisfy the square-summability condition")

    total, every = cfg.total_steps, cfg.record_every
    q = np.full(mdp.shape, float(cfg.initial_q))
    counts = np.zeros(mdp.shape, dtype=np.int64)
    errors = np.empty(total // every + 1)
    errors[0] = _greedy_error(q, v_star)
    history = np.empty(total if keep_history else 0)

    cdf = transition_cdf(mdp)
    last_support = np.array(
        [[np.flatnonzero(row > 0)[-1] for row in rows] for rows in mdp.transition], dtype=np.int64
    )
    rng = make_rng(cfg.seed)
    state = 0
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        uniforms = rng.random(2 * (stop - start))
        state = _advance(
            cdf, last_support, mdp.reward, mdp.discount, q, counts, state, start, uniforms,
            sor, w, cfg.schedule.kind == "polynomial", cfg.schedule.c0, cfg.schedule.exponent,
            every, v_star, errors, history,
        )

    steps = np.arange(0, total + 1, every)
    if total % every:
        steps = np.append(steps, total)
        errors = np.append(errors, _greedy_error(q, v_star))
    learner = LearnerState(q, counts, int(state), total)
    if total >= 10 * mdp.num_states * mdp.num_actions and learner.unvisited():
        log.warning("state-action pairs never visited: %s", learner.unvisited())
    return LearnerRun(
        learner,
        ErrorTrace(steps, errors),
        history if keep_history else None,
    )
