"""Reuse of a learned prior as the starting point for prior learning on a modified map."""

from __future__ import annotations

from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Sequence

from .gridworld import MapSpec, load_map
from .learner import (MetricsLog, SourceConfig, TrainConfig, goal_state_sets,
                      learn_prior_offpolicy, train_sources)
from .mdp import QTable
from .prior import load_prior_table
from .rng import RngStream

INIT_MODES = ("from_source", "scratch")
SOURCE_GOALS = ("omega1", "omega2", "omega3", "omega4")


@dataclass(frozen=True)
class TransferSpec:
    target_map_path: str | PathLike
    init_mode: str = "from_source"
    source_prior_path: str | PathLike | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = tuple(range(10))
    threshold_t: float = 0.35
    goals: tuple[str, ...] = SOURCE_GOALS
    source: SourceConfig = field(default_factory=SourceConfig)

    def __post_init__(self):
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.init_mode == "from_source" and self.source_prior_path is None:
            raise ValueError("from_source initialization needs source_prior_path")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(self.goals) < 2:
            raise ValueError("prior learning needs at least two source goals")


@dataclass
class TransferResult:
    spec: TransferSpec
    logs: list[MetricsLog]
    sources_converged: list[bool]

    def first_window(self, width: int = 100) -> float:
        return _window(self.logs, 0, width)

    def last_window(self, width: int = 100) -> float:
        n = len(self.logs[0])
        return _window(self.logs, n - width, n)


def _window(logs: Sequence[MetricsLog], start: int, stop: int) -> float:
    vals = [v for log in logs for v in log.prior_td[start:stop]]
    return sum(vals) / len(vals)


def initial_prior(spec: TransferSpec, env: MapSpec) -> QTable:
    if spec.init_mode == "scratch":
        return QTable.zeros(env.state_count, env.action_count)
    path = Path(spec.source_prior_path)
    if not path.exists():
        raise FileNotFoundError(f"source prior not found: {path}")
    q, _ = load_prior_table(path)
    if q.values.shape != (env.state_count, env.action_count):
        raise ValueError(f"source prior has shape {q.values.shape}, target map needs "
                         f"({env.state_count}, {env.action_count})")
    return q


def run_transfer(spec: TransferSpec, rng: RngStream | int = 0,
                 sources: Sequence[QTable] | None = None) -> TransferResult:
    """Learn ``Q_P`` on the target map once per seed, starting from the mode's initial table.

    Source tasks for the target map are trained from ``rng`` unless ``sources``
    is given; passing the same tables to both init modes keeps the comparison
    paired. Behavior is uniform random, so a seed yields the same transitions
    under either initialization.
    """
    rng = rng if isinstance(rng, RngStream) else RngStream(rng)
    env = load_map(spec.target_map_path)
    q0 = initial_prior(spec, env)
    if sources is None:
        sources, _, converged = train_sources(env, spec.goals, spec.source, rng)
    else:
        converged = [True] * len(sources)
    goal_sets = goal_state_sets(env, spec.goals)
    logs = []
    for seed in spec.seeds:
        _, log = learn_prior_offpolicy(env, sources, spec.train, t=spec.threshold_t,
                                       rng=RngStream(seed), q_init=q0, source_goals=goal_sets,
                                       source_labels=list(spec.goals))
        logs.append(log)
    return TransferResult(spec, logs, list(converged))
