"""Training loops for task learning and off-policy prior learning."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from os import PathLike
from pathlib import Path
from typing import Sequence

from .explore import ExploreConfig, bias_row, epsilon_greedy_row, epsilon_schedule, greedy_prior_row
from .gridworld import MapSpec, cell_center, reset, step, with_goal
from .mdp import DiscountedParams, QTable, argmax_row, td_update
from .prior import PriorModel
from .rng import RngStream

CSV_HEADER = ("episode", "return", "collisions", "steps", "epsilon", "prior_td")


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 2000
    horizon: int = 500
    params: DiscountedParams = field(default_factory=DiscountedParams)
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    prior_enabled: bool = False
    prior_learn_parallel: bool = False

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class MetricsLog:
    seed: int | None = None
    config_hash: str = ""
    returns: list[float] = field(default_factory=list)
    collisions: list[int] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    epsilons: list[float] = field(default_factory=list)
    prior_td: list[float] = field(default_factory=list)
    prior_updates: int = 0

    def __len__(self) -> int:
        return len(self.returns)

    def add(self, ret: float, collisions: int, steps: int, eps: float,
            prior_td: float = math.nan) -> None:
        self.returns.append(ret)
        self.collisions.append(collisions)
        self.steps.append(steps)
        self.epsilons.append(eps)
        self.prior_td.append(prior_td)

    @property
    def env_steps(self) -> int:
        return sum(self.steps)

    def cumulative_collisions(self, episodes: int | None = None) -> int:
        return sum(self.collisions[:episodes])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for k in range(len(self)):
            writer.writerow([k, f"{self.returns[k]:.17g}", self.collisions[k], self.steps[k],
                             f"{self.epsilons[k]:.17g}", f"{self.prior_td[k]:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsLog":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        log = cls()
        for k, row in enumerate(reader):
            if int(row[0]) != k:
                raise ValueError(f"episode index {row[0]} out of order")
            log.add(float(row[1]), int(row[2]), int(row[3]), float(row[4]), float(row[5]))
        return log

    def save(self, path: str | PathLike) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | PathLike) -> "MetricsLog":
        return cls.from_csv(Path(path).read_text())


def episode_return(rewards: Sequence[float], gamma: float) -> float:
    total = 0.0
    disc = 1.0
    for r in rewards:
        total += disc * r
        disc *= gamma
    return total


def _as_rng(rng: RngStream | int) -> RngStream:
    return rng if isinstance(rng, RngStream) else RngStream(rng)


def train_task(env: MapSpec, cfg: TrainConfig, prior: PriorModel | QTable | None = None,
               rng: RngStream | int = 0, q_init: QTable | None = None,
               start_episode: int = 0):
    """Q-learning on ``env`` for ``cfg.episodes`` episodes.

    ``prior`` may be a :class:`PriorModel` or a bare ``Q_P`` table; it biases
    exploratory actions when ``cfg.prior_enabled`` and, for a model with
    ``cfg.prior_learn_parallel``, is also updated from the same transitions.
    ``start_episode`` offsets the epsilon schedule when resuming from ``q_init``.
    Returns ``(q, log, prior)``.
    """
    rng = _as_rng(rng)
    if cfg.prior_enabled and prior is None:
        raise ValueError("prior_enabled requires a prior")
    if cfg.prior_learn_parallel and not isinstance(prior, PriorModel):
        raise ValueError("parallel prior learning requires a PriorModel")
    q = q_init.copy() if q_init is not None else QTable.zeros(env.state_count, env.action_count)
    model = prior if isinstance(prior, PriorModel) else None
    qp_table = prior.q_p if model is not None else prior
    if qp_table is not None and qp_table.values.shape != q.values.shape:
        raise ValueError("prior table does not match the environment dimensions")

    rows = q.values.tolist()
    qp_rows = qp_table.values.tolist() if qp_table is not None else None
    alpha, gamma = cfg.params.alpha, cfg.params.gamma
    ex = cfg.explore
    bias_mode = ex.mode if cfg.prior_enabled else "none"
    rho = ex.rho
    learn_prior = cfg.prior_learn_parallel
    log = MetricsLog(seed=rng.seed, config_hash=cfg.digest())

    for k in range(start_episode, start_episode + cfg.episodes):
        eps = epsilon_schedule(k, ex)
        s, pose = reset(env, rng)
        ret, disc, collisions, td_sum, n = 0.0, 1.0, 0, 0.0, 0
        for _ in range(cfg.horizon):
            a, exploratory = epsilon_greedy_row(rows[s], eps, rng)
            if exploratory:
                if bias_mode == "avoid":
                    a = bias_row(qp_rows[s], a, rho, rng)
                elif bias_mode == "seek":
                    a = greedy_prior_row(qp_rows[s], rho, rng)
            out = step(env, pose, a, rng)
            td_update(rows, s, a, out.reward, out.next_state, out.terminal, alpha, gamma)
            if learn_prior:
                td_sum += abs(model.update(qp_rows, s, a, out.next_state))
                log.prior_updates += 1
            ret += disc * out.reward
            disc *= gamma
            collisions += out.collided
            n += 1
            s, pose = out.next_state, out.pose
            if out.terminal:
                break
        log.add(ret, collisions, n, eps, td_sum / n if learn_prior else math.nan)

    q.values[:] = rows
    if model is not None and learn_prior:
        model.q_p.values[:] = qp_rows
    return q, log, prior


def learn_prior_offpolicy(env: MapSpec, sources: Sequence[QTable] | PriorModel, cfg: TrainConfig,
                          t: float = 0.35, rng: RngStream | int = 0,
                          behavior: str | QTable = "uniform", mode: str = "avoid",
                          q_init: QTable | None = None,
                          source_goals: Sequence[frozenset[int]] | None = None,
                          source_labels: Sequence[str] | None = None):
    """Learn ``Q_P`` from the transitions of a behavior policy.

    ``behavior`` is ``"uniform"`` or a task Q-table followed epsilon-greedily
    under ``cfg.explore``. ``sources`` may also be a ready :class:`PriorModel`
    to continue training. Returns ``(prior, log)``; the log's ``prior_td``
    column holds the mean absolute TD error of ``Q_P`` per episode.
    """
    rng = _as_rng(rng)
    if isinstance(sources, PriorModel):
        prior = sources
    else:
        if len(sources) < 2:
            raise ValueError("prior learning needs at least two source tables")
        q_p = q_init.copy() if q_init is not None else QTable.zeros(env.state_count, env.action_count)
        prior = PriorModel(q_p=q_p, sources=list(sources), threshold_t=t, params=cfg.params,
                           mode=mode, source_labels=list(source_labels or []),
                           source_goals=list(source_goals or []))
    if prior.q_p.values.shape != (env.state_count, env.action_count):
        raise ValueError("prior table does not match the environment dimensions")

    qp_rows = prior.q_p.values.tolist()
    greedy_rows = None
    if isinstance(behavior, QTable):
        greedy_rows = behavior.values.tolist()
    elif behavior != "uniform":
        raise ValueError(f"unknown behavior policy {behavior!r}")
    gamma = cfg.params.gamma
    nA = env.action_count
    log = MetricsLog(seed=rng.seed, config_hash=cfg.digest())

    for k in range(cfg.episodes):
        eps = epsilon_schedule(k, cfg.explore) if greedy_rows is not None else 1.0
        s, pose = reset(env, rng)
        ret, disc, collisions, td_sum, n = 0.0, 1.0, 0, 0.0, 0
        for _ in range(cfg.horizon):
            if greedy_rows is None:
                a = rng.integers(nA)
            else:
                a, _ = epsilon_greedy_row(greedy_rows[s], eps, rng)
            out = step(env, pose, a, rng)
            td_sum += abs(prior.update(qp_rows, s, a, out.next_state))
            log.prior_updates += 1
            ret += disc * out.reward
            disc *= gamma
            collisions += out.collided
            n += 1
            s, pose = out.next_state, out.pose
            if out.terminal:
                break
        log.add(ret, collisions, n, eps, td_sum / n)

    prior.q_p.values[:] = qp_rows
    return prior, log


def greedy_rollout(env: MapSpec, q: QTable, start: int, horizon: int, rng: RngStream) -> bool:
    """True when the greedy policy reaches a goal from ``start`` within ``horizon`` steps."""
    rows = q.values.tolist()
    s, pose = start, cell_center(env, start)
    for _ in range(horizon):
        out = step(env, pose, argmax_row(rows[s]), rng)
        if out.terminal:
            return True
        s, pose = out.next_state, out.pose
    return False


def greedy_success_rate(env: MapSpec, q: QTable, horizon: int = 500,
                        rng: RngStream | int = 0) -> float:
    """Fraction of free start cells from which one greedy rollout reaches the goal."""
    rng = _as_rng(rng)
    starts = env.start_states
    hits = sum(greedy_rollout(env, q, s, horizon, rng) for s in starts)
    return hits / len(starts)


@dataclass(frozen=True)
class SourceConfig:
    """Source-task training: Q-learning in chunks until every start reaches the goal."""

    chunk: int = 4000
    max_episodes: int = 60000
    horizon: int = 500
    params: DiscountedParams = field(default_factory=DiscountedParams)
    explore: ExploreConfig = field(
        default_factory=lambda: ExploreConfig(epsilon_decay=0.999, epsilon_min=0.3, mode="none"))


def train_source(env: MapSpec, cfg: SourceConfig, rng: RngStream | int = 0):
    """Returns ``(q, log, converged)``; ``log`` concatenates all chunks."""
    rng = _as_rng(rng)
    check_rng = rng.spawn(1)
    chunk_cfg = TrainConfig(episodes=cfg.chunk, horizon=cfg.horizon, params=cfg.params,
                            explore=cfg.explore)
    q, done = None, 0
    full = MetricsLog(seed=rng.seed, config_hash=chunk_cfg.digest())
    while done < cfg.max_episodes:
        q, log, _ = train_task(env, chunk_cfg, rng=rng, q_init=q, start_episode=done)
        done += cfg.chunk
        for k in range(len(log)):
            full.add(log.returns[k], log.collisions[k], log.steps[k], log.epsilons[k])
        if greedy_success_rate(env, q, cfg.horizon, check_rng) == 1.0:
            return q, full, True
    return q, full, False


def train_sources(env: MapSpec, goals: Sequence[str | tuple[int, int]], cfg: SourceConfig,
                  rng: RngStream | int = 0):
    """One source task per goal on ``env``; each gets its own substream of ``rng``.

    Returns ``(tables, logs, converged)`` as parallel lists.
    """
    rng = _as_rng(rng)
    tables, logs, flags = [], [], []
    for i, goal in enumerate(goals):
        q, log, ok = train_source(with_goal(env, goal), cfg, rng.spawn(i))
        tables.append(q)
        logs.append(log)
        flags.append(ok)
    return tables, logs, flags


def goal_state_sets(env: MapSpec, goals: Sequence[str | tuple[int, int]]) -> list[frozenset[int]]:
    return [frozenset(with_goal(env, g).goal_states) for g in goals]
