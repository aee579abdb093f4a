"""Finite discounted MDPs: construction, validation, generation, sampling and I/O."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .rng import check_seed, make_rng

ROW_SUM_TOL = 1e-12

# Plain ndarray aliases. A ValueFunction has shape (S,), a QTable (S, A) and a
# Policy is an integer vector of shape (S,).
ValueFunction = np.ndarray
QTable = np.ndarray
Policy = np.ndarray


class MdpFormatError(ValueError):
    """Malformed MDP text file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidMdpError(ValueError):
    """An MDP failed validation. The full report is kept on ``report``."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("invalid MDP: " + "; ".join(report.violations))


@dataclass(frozen=True)
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    # Informational only: p(i|i,a) > 0 for every (i, a).
    self_loops_positive: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True, eq=False)
class Mdp:
    """A finite MDP with dense tensors indexed ``[state, action, next_state]``.

    Arrays are copied to float64 and frozen at construction. Use
    :func:`validate` (or :meth:`checked`) to verify the model.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    reward_bound: float = field(init=False)

    def __post_init__(self):
        p = np.array(self.transition, dtype=np.float64)
        r = np.array(self.reward, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"transition must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape:
            raise ValueError(f"reward shape {r.shape} does not match transition {p.shape}")
        p.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", float(self.discount))
        bound = float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else math.inf
        object.__setattr__(self, "reward_bound", bound)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_states, self.num_actions

    def expected_rewards(self) -> np.ndarray:
        """All r(i, a) = sum_j p(j|i,a) r(i,a,j) as an (S, A) array."""
        return np.einsum("iaj,iaj->ia", self.transition, self.reward)

    def self_loops(self) -> np.ndarray:
        """p(i|i,a) as an (S, A) array."""
        idx = np.arange(self.num_states)
        return self.transition[idx, :, idx]

    def checked(self) -> Mdp:
        report = validate(self)
        if not report.ok:
            raise InvalidMdpError(report)
        return self

    def __eq__(self, other):
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.discount == other.discount
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward, other.reward)
        )

    __hash__ = None


def validate(mdp: Mdp) -> ValidationReport:
    violations = []
    p, r = mdp.transition, mdp.reward
    if not (0.0 <= mdp.discount < 1.0):
        violations.append(f"discount {mdp.discount!r} outside [0, 1)")
    if not np.all(np.isfinite(p)):
        violations.append("non-finite transition entry")
    if not np.all(np.isfinite(r)):
        violations.append("non-finite reward entry")
    for i, a in np.argwhere(np.any(p < 0, axis=2)):
        violations.append(f"negative probability in row (i={i}, a={a})")
    sums = p.sum(axis=2)
    for i, a in np.argwhere(~(np.abs(sums - 1.0) <= ROW_SUM_TOL)):
        violations.append(f"row (i={i}, a={a}) sums to {sums[i, a]!r}, not 1")
    return ValidationReport(violations, bool(np.all(mdp.self_loops() > 0)))


@dataclass(frozen=True)
class GeneratorConfig:
    num_states: int = 10
    num_actions: int = 5
    discount: float = 0.9
    min_self_loop: float = 0.05
    reward_low: float = -1.0
    reward_high: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise ValueError("num_states and num_actions must be positive")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if not 0.0 <= self.min_self_loop < 1.0:
            raise ValueError(f"min_self_loop must lie in [0, 1), got {self.min_self_loop}")
        if not self.reward_low <= self.reward_high:
            raise ValueError("reward_low must not exceed reward_high")
        check_seed(self.seed)


def generate_random_mdp(cfg: GeneratorConfig) -> Mdp:
    """Draw a random dense MDP whose self-loop probabilities are at least ``min_self_loop``.

    Each row is M uniforms normalized to sum 1 and then mixed with the point
    mass on the current state. Rewards are uniform on ``[reward_low, reward_high]``.
    """
    rng = make_rng(cfg.seed)
    s, a = cfg.num_states, cfg.num_actions
    q = rng.random((s, a, s))
    q /= q.sum(axis=2, keepdims=True)
    p = (1.0 - cfg.min_self_loop) * q
    idx = np.arange(s)
    p[idx, :, idx] += cfg.min_self_loop
    r = rng.uniform(cfg.reward_low, cfg.reward_high, size=(s, a, s))
    return Mdp(p, r, cfg.discount).checked()


def _check_index(mdp: Mdp, i: int, a: int) -> None:
    if not (0 <= i < mdp.num_states and 0 <= a < mdp.num_actions):
        raise IndexError(f"(state={i}, action={a}) out of range for MDP of shape {mdp.shape}")


def expected_reward(mdp: Mdp, i: int, a: int) -> float:
    _check_index(mdp, i, a)
    return float(np.dot(mdp.transition[i, a], mdp.reward[i, a]))


def transition_cdf(mdp: Mdp) -> np.ndarray:
    """Cumulative transition rows, shape (S, A, S), used for inverse-CDF sampling."""
    return np.cumsum(mdp.transition, axis=2)


def inverse_cdf(cdf_row: np.ndarray, prob_row: np.ndarray, u: float) -> int:
    """First index j with u < cdf[j]; rounding overflow falls back to the last supported index."""
    j = int(np.searchsorted(cdf_row, u, side="right"))
    if j >= len(cdf_row):
        j = int(np.flatnonzero(prob_row > 0)[-1])
    return j


def sample_transition(mdp: Mdp, i: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
    """Sample ``(next_state, reward)`` from p(.|i,a) using exactly one uniform variate."""
    u = rng.random()
    row = mdp.transition[i, a]
    j = inverse_cdf(np.cumsum(row), row, u)
    return j, float(mdp.reward[i, a, j])


# ---------------------------------------------------------------------------
# Text format
#
#   mdp <num_states> <num_actions> <discount>
#   P i a  p0 p1 ... p(M-1)
#   R i a  r0 r1 ... r(M-1)
#
# one P/R pair per (i, a) in row-major order; '#' starts a comment line.


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_mdp(mdp: Mdp) -> str:
    lines = [f"mdp {mdp.num_states} {mdp.num_actions} {_fmt(mdp.discount)}"]
    for i in range(mdp.num_states):
        for a in range(mdp.num_actions):
            lines.append(f"P {i} {a}  " + " ".join(_fmt(x) for x in mdp.transition[i, a]))
            lines.append(f"R {i} {a}  " + " ".join(_fmt(x) for x in mdp.reward[i, a]))
    return "\n".join(lines) + "\n"


def write_mdp(mdp: Mdp, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_mdp(mdp))


def parse_mdp(text: str) -> Mdp:
    rows = [
        (n, line.split())
        for n, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not rows:
        raise MdpFormatError("empty file")

    n, head = rows[0]
    if len(head) != 4 or head[0] != "mdp":
        raise MdpFormatError("expected header 'mdp <num_states> <num_actions> <discount>'", n)
    try:
        s, a, discount = int(head[1]), int(head[2]), float(head[3])
    except ValueError as exc:
        raise MdpFormatError(f"bad header: {exc}", n) from None
    if s < 1 or a < 1:
        raise MdpFormatError("num_states and num_actions must be positive", n)

    p = np.empty((s, a, s))
    r = np.empty((s, a, s))
    body = rows[1:]
    expected = [(tag, i, b) for i in range(s) for b in range(a) for tag in ("P", "R")]
    for k, (tag, i, b) in enumerate(expected):
        if k >= len(body):
            last = body[-1][0] if body else n
            raise MdpFormatError(f"missing '{tag} {i} {b}' row", last + 1)
        n, tok = body[k]
        if tok[:3] != [tag, str(i), str(b)]:
            raise MdpFormatError(f"expected '{tag} {i} {b}' row, got {' '.join(tok[:3])!r}", n)
        if len(tok) != 3 + s:
            raise MdpFormatError(f"expected {s} values, got {len(tok) - 3}", n)
        try:
            values = [float(x) for x in tok[3:]]
        except ValueError as exc:
            raise MdpFormatError(str(exc), n) from None
        (p if tag == "P" else r)[i, b] = values
    if len(body) > len(expected):
        raise MdpFormatError("unexpected trailing row", body[len(expected)][0])
    return Mdp(p, r, discount)


def read_mdp(path: str | os.PathLike) -> Mdp:
    """Parse and validate an MDP file."""
    with open(path, encoding="utf-8") as fh:
        return parse_mdp(fh.read()).checked()
