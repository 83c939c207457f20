"""Tabular MDP primitives: Q-tables, greedy selection, the Q-learning update
and a value-iteration solver used as a reference in tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DiscountedParams:
    alpha: float = 0.05
    gamma: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


class QTable:
    """Dense ``(state, action)`` value table backed by a float64 array."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"Q-table needs a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Q-table values must be finite")
        self.values = values

    @classmethod
    def zeros(cls, state_count: int, action_count: int) -> "QTable":
        return cls(np.zeros((state_count, action_count)))

    @property
    def state_count(self) -> int:
        return self.values.shape[0]

    @property
    def action_count(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "QTable":
        return QTable(self.values.copy())

    def check_state(self, s: int) -> None:
        if not 0 <= s < self.state_count:
            raise IndexError(f"state {s} outside [0, {self.state_count})")

    def check_action(self, a: int) -> None:
        if not 0 <= a < self.action_count:
            raise IndexError(f"action {a} outside [0, {self.action_count})")

    def __eq__(self, other) -> bool:
        return isinstance(other, QTable) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"QTable({self.state_count}x{self.action_count})"


def argmax_row(row: Sequence[float]) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    best = 0
    best_value = row[0]
    for i in range(1, len(row)):
        if row[i] > best_value:
            best = i
            best_value = row[i]
    return best


def greedy_action(q: QTable, s: int) -> int:
    q.check_state(s)
    return argmax_row(q.values[s].tolist())


def advantage(q: QTable, s: int, a: int) -> float:
    """``Q(s, a) - max_a' Q(s, a')``; never positive."""
    q.check_state(s)
    q.check_action(a)
    row = q.values[s]
    return float(row[a] - row.max())


def td_update(values, s: int, a: int, r: float, s_next: int, terminal: bool,
              alpha: float, gamma: float) -> float:
    """In-place Q-learning step on a 2-D indexable table; returns the TD error.

    Works on numpy arrays and on nested lists (the training loops use lists).
    """
    row = values[s]
    target = r if terminal else r + gamma * max(values[s_next])
    td = target - row[a]
    row[a] += alpha * td
    return td


def q_update(q: QTable, s: int, a: int, r: float, s_next: int, terminal: bool,
             params: DiscountedParams) -> float:
    """Apply one Q-learning update and return the new ``Q(s, a)``."""
    q.check_state(s)
    q.check_state(s_next)
    q.check_action(a)
    if not math.isfinite(r):
        raise ValueError(f"reward must be finite, got {r}")
    td_update(q.values, s, a, r, s_next, terminal, params.alpha, params.gamma)
    new = float(q.values[s, a])
    if not math.isfinite(new):
        raise ValueError("Q-learning update produced a non-finite value")
    return new


@dataclass
class TabularModel:
    """Explicit finite MDP.

    ``transitions[s, a, s']`` are probabilities, ``rewards[s, a, s']`` the
    transition rewards, and ``terminal[s']`` marks absorbing goal states whose
    successors are never bootstrapped.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        S, A, S2 = self.transitions.shape
        if S != S2 or self.rewards.shape != (S, A, S) or self.terminal.shape != (S,):
            raise ValueError("inconsistent model dimensions")
        if not np.allclose(self.transitions.sum(axis=2), 1.0):
            raise ValueError("transition rows must sum to 1")

    @property
    def state_count(self) -> int:
        return self.transitions.shape[0]

    @property
    def action_count(self) -> int:
        return self.transitions.shape[1]

    def backup(self, q: np.ndarray, gamma: float) -> np.ndarray:
        v = np.where(self.terminal, 0.0, q.max(axis=1))
        out = np.einsum("ijk,ijk->ij", self.transitions, self.rewards + gamma * v[None, None, :])
        out[self.terminal] = 0.0
        return out


def value_iteration(model: TabularModel, gamma: float, tol: float = 1e-9,
                    max_iter: int = 1_000_000) -> QTable:
    """Optimal Q-values with Bellman residual below ``tol`` everywhere.

    Rows of terminal states are zero, matching the episodic convention of
    :func:`q_update`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma == 1.0 and not model.terminal.any():
        raise ValueError("gamma = 1 requires an episodic model with terminal states")
    q = np.zeros((model.state_count, model.action_count))
    for _ in range(max_iter):
        new = model.backup(q, gamma)
        residual = np.abs(new - q).max()
        q = new
        if residual < tol:
            # one more check so the returned table itself satisfies the bound
            if np.abs(model.backup(q, gamma) - q).max() < tol:
                return QTable(q)
    raise RuntimeError(f"value iteration did not reach residual {tol} in {max_iter} sweeps")


def format_qtable(q: QTable) -> str:
    lines = [f"qtable {q.state_count} {q.action_count}"]
    for row in q.values:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_qtable(text: str) -> QTable:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty Q-table file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "qtable":
        raise ValueError(f"bad Q-table header: {lines[0]!r}")
    S, A = int(head[1]), int(head[2])
    if len(lines) - 1 != S:
        raise ValueError(f"expected {S} state rows, found {len(lines) - 1}")
    values = np.empty((S, A))
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != A:
            raise ValueError(f"row {i}: expected {A} values, found {len(parts)}")
        values[i] = [float.fromhex(p) if p.startswith(("0x", "-0x")) else float(p) for p in parts]
    return QTable(values)


def save_qtable(q: QTable, path: str | PathLike) -> None:
    Path(path).write_text(format_qtable(q))


def load_qtable(path: str | PathLike) -> QTable:
    return parse_qtable(Path(path).read_text())
