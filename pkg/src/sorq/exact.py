"""Model-based Bellman operators, their over-relaxed variants, and fixed-point solvers.

These are the ground truth the learners are measured against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, Policy, QTable, ValueFunction

W_TOL = 1e-12
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class SolveResult:
    solution: np.ndarray
    iterations: int
    final_residual: float
    converged: bool


def w_star(mdp: Mdp) -> float:
    """Largest admissible relaxation factor, min over (i, a) of 1 / (1 - discount * p(i|i,a))."""
    return float(np.min(1.0 / (1.0 - mdp.discount * mdp.self_loops())))


def check_relaxation(mdp: Mdp, w: float) -> float:
    w = float(w)
    limit = w_star(mdp)
    if not (0.0 < w <= limit + W_TOL):
        raise ValueError(f"relaxation factor w={w!r} outside (0, w*={limit!r}]")
    return w


def contraction_factor(w: float, discount: float) -> float:
    """Max-norm contraction factor ``w * discount + 1 - w`` of the relaxed Q operator."""
    return w * discount + 1.0 - w


def max_abs_diff(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - y)))


def _check_v(mdp: Mdp, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mdp.num_states,):
        raise ValueError(f"value function shape {v.shape} != ({mdp.num_states},)")
    return v


def _check_q(mdp: Mdp, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != mdp.shape:
        raise ValueError(f"Q-table shape {q.shape} != {mdp.shape}")
    return q


def _backup(mdp: Mdp, v: np.ndarray) -> np.ndarray:
    # r(i,a) + discount * sum_j p(j|i,a) v(j), shape (S, A)
    return mdp.expected_rewards() + mdp.discount * (mdp.transition @ v)


def bellman_T(mdp: Mdp, v: ValueFunction) -> ValueFunction:
    return _backup(mdp, _check_v(mdp, v)).max(axis=1)


def sor_bellman_Tw(mdp: Mdp, v: ValueFunction, w: float) -> ValueFunction:
    """(T_w v)(i) = max_a { w * backup(i, a) + (1 - w) v(i) }."""
    v = _check_v(mdp, v)
    w = check_relaxation(mdp, w)
    return (w * _backup(mdp, v) + (1.0 - w) * v[:, None]).max(axis=1)


def q_bellman_H(mdp: Mdp, q: QTable) -> QTable:
    return _backup(mdp, _check_q(mdp, q).max(axis=1))


def sor_q_bellman_Hw(mdp: Mdp, q: QTable, w: float) -> QTable:
    """(H_w q)(i,a) = w * (r(i,a) + discount * E[max_b q(j,b)]) + (1 - w) max_c q(i,c)."""
    q = _check_q(mdp, q)
    w = check_relaxation(mdp, w)
    qmax = q.max(axis=1)
    return w * _backup(mdp, qmax) + (1.0 - w) * qmax[:, None]


def _fixed_point(op, x0: np.ndarray, tol: float, max_iter: int) -> SolveResult:
    # Stops at the first iterate x_n with ||op(x_n) - x_n|| <= tol and returns x_n;
    # ``iterations`` counts the operator applications that produced x_n.
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 0:
        raise ValueError("max_iter must be non-negative")
    x = x0
    for n in range(max_iter + 1):
        nxt = op(x)
        step = max_abs_diff(nxt, x)
        if step <= tol:
            return SolveResult(x, n, step, True)
        if n < max_iter:
            x = nxt
    return SolveResult(x, max_iter, step, False)


def value_iteration(
    mdp: Mdp,
    w: float = 1.0,
    v0: ValueFunction | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolveResult:
    """Iterate ``T_w`` from ``v0`` (zeros by default). Any admissible w has limit V*."""
    w = check_relaxation(mdp, w)
    v = np.zeros(mdp.num_states) if v0 is None else _check_v(mdp, v0).copy()
    if w == 1.0:
        return _fixed_point(lambda x: bellman_T(mdp, x), v, tol, max_iter)
    return _fixed_point(lambda x: sor_bellman_Tw(mdp, x, w), v, tol, max_iter)


def q_value_iteration(
    mdp: Mdp,
    w: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    q0: QTable | None = None,
) -> SolveResult:
    """Iterate ``H_w`` from zeros to its unique fixed point."""
    w = check_relaxation(mdp, w)
    q = np.zeros(mdp.shape) if q0 is None else _check_q(mdp, q0).copy()
    if w == 1.0:
        return _fixed_point(lambda x: q_bellman_H(mdp, x), q, tol, max_iter)
    return _fixed_point(lambda x: sor_q_bellman_Hw(mdp, x, w), q, tol, max_iter)


def greedy_policy(q: QTable) -> Policy:
    """Row-wise argmax; ties go to the lowest action index."""
    return np.argmax(np.asarray(q), axis=1)


def optimal_action_sets(q: QTable, tol: float) -> list[frozenset[int]]:
    """Per state, the actions whose value lies within ``tol`` of the row maximum."""
    q = np.asarray(q)
    best = q.max(axis=1, keepdims=True)
    return [frozenset(np.flatnonzero(row).tolist()) for row in q >= best - tol]
