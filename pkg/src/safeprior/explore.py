"""Exploration policies: decaying epsilon-greedy and prior-guided exploration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .mdp import QTable, argmax_row
from .rng import RngStream

EXPLORE_MODES = ("none", "avoid", "seek")


@dataclass(frozen=True)
class ExploreConfig:
    epsilon0: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    rho: float = 0.95
    mode: str = "avoid"

    def __post_init__(self):
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ValueError("epsilon0 must lie in [0, 1]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must lie in (0, 1]")
        if not 0.0 <= self.epsilon_min <= 1.0:
            raise ValueError("epsilon_min must lie in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.mode not in EXPLORE_MODES:
            raise ValueError(f"unknown exploration mode {self.mode!r}")


def epsilon_schedule(k: int, cfg: ExploreConfig) -> float:
    if k < 0:
        raise ValueError("episode index must be non-negative")
    return max(cfg.epsilon_min, cfg.epsilon0 * cfg.epsilon_decay ** k)


def epsilon_greedy_row(row: Sequence[float], eps: float, rng: RngStream) -> tuple[int, bool]:
    if rng.random() < eps:
        return rng.integers(len(row)), True
    return argmax_row(row), False


def epsilon_greedy(q: QTable, s: int, eps: float, rng: RngStream) -> tuple[int, bool]:
    """Returns ``(action, exploratory)``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    q.check_state(s)
    return epsilon_greedy_row(q.values[s].tolist(), eps, rng)


def bias_row(row: Sequence[float], proposed: int, rho: float, rng: RngStream) -> int:
    if rng.random() >= rho:
        return proposed
    n = len(row)
    # min() keeps the loop finite when rounding puts the mean above every entry
    threshold = min(sum(row) / n, max(row))
    a = proposed
    while row[a] < threshold:
        a = rng.integers(n)
    return a


def bias_exploratory_action(q_p: QTable, s: int, proposed: int, rho: float,
                            rng: RngStream) -> int:
    """With probability ``rho``, redraw uniformly until ``Q_P(s, a)`` reaches the row mean."""
    q_p.check_state(s)
    q_p.check_action(proposed)
    return bias_row(q_p.values[s].tolist(), proposed, rho, rng)


def greedy_prior_row(row: Sequence[float], rho: float, rng: RngStream) -> int:
    if rng.random() < rho:
        return argmax_row(row)
    return rng.integers(len(row))


def greedy_prior_exploration(q_p: QTable, s: int, rho: float, rng: RngStream) -> int:
    """With probability ``rho`` the greedy action of ``Q_P``, otherwise uniform."""
    q_p.check_state(s)
    return greedy_prior_row(q_p.values[s].tolist(), rho, rng)
