"""End-to-end pipelines behind the command line: sources, prior, target runs, theorem grid,
transfer and the common-reward variant. Each returns in-memory results; writing files is the
caller's business."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .analysis import TheoremParams, mean_and_stderr, monte_carlo_unsafe_ratio, theorem_ratio
from .config import ExperimentConfig
from .gridworld import DELTAS, CellKind, MapSpec, load_map, manhattan, with_goal
from .learner import (MetricsLog, SourceConfig, goal_state_sets, greedy_success_rate,
                      learn_prior_offpolicy, train_source, train_task)
from .mdp import QTable
from .prior import PriorModel
from .rng import RngStream
from .transfer import TransferResult, TransferSpec, run_transfer


def run_jobs(fn: Callable, tasks: Iterable, jobs: int = 1) -> list:
    """``map`` in order; with ``jobs > 1`` tasks go to worker processes."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _source_job(args):
    env, goal, cfg, seed = args
    return train_source(with_goal(env, goal), cfg, RngStream(seed))


def train_source_tables(env: MapSpec, goals: Sequence[str], cfg: SourceConfig, seed: int,
                        jobs: int = 1):
    """Same streams as :func:`learner.train_sources`, but parallel over goals."""
    root = RngStream(seed)
    tasks = [(env, g, cfg, root.spawn(i).seed) for i, g in enumerate(goals)]
    results = run_jobs(_source_job, tasks, jobs)
    tables = [q for q, _, _ in results]
    logs = [log for _, log, _ in results]
    return tables, logs, [ok for _, _, ok in results]


def learn_prior(env: MapSpec, sources: Sequence[QTable], cfg: ExperimentConfig,
                goals: Sequence[str] | None = None, mode: str | None = None):
    goals = list(goals or cfg.goals)
    return learn_prior_offpolicy(env, sources, cfg.prior_config(), t=cfg.threshold_t,
                                 rng=RngStream(cfg.prior_seed), mode=mode or cfg.mode,
                                 source_goals=goal_state_sets(env, goals), source_labels=goals)


@dataclass
class TargetRun:
    seed: int
    arm: str
    log: MetricsLog
    success: float


def _target_job(args) -> TargetRun:
    env, cfg, q_p, seed, arm, bias = args
    train = cfg.train_config(prior_enabled=q_p is not None)
    if q_p is not None:
        train = type(train)(episodes=train.episodes, horizon=train.horizon, params=train.params,
                            explore=cfg.explore_config(bias), prior_enabled=True)
    rng = RngStream(seed)
    q, log, _ = train_task(env, train, prior=q_p, rng=rng)
    success = greedy_success_rate(env, q, cfg.horizon, rng.spawn(99))
    return TargetRun(seed, arm, log, success)


def paired_target_runs(env: MapSpec, q_p: QTable, cfg: ExperimentConfig,
                       bias: str = "avoid") -> dict[str, list[TargetRun]]:
    """With-prior and baseline learners on the same seeds."""
    tasks = [(env, cfg, q_p, s, "with_prior", bias) for s in cfg.seeds]
    tasks += [(env, cfg, None, s, "baseline", "none") for s in cfg.seeds]
    runs = run_jobs(_target_job, tasks, cfg.jobs)
    n = len(cfg.seeds)
    return {"with_prior": runs[:n], "baseline": runs[n:]}


AGGREGATE_HEADER = ("episode", "return_mean", "return_se", "collisions_mean", "collisions_se",
                    "cum_collisions_mean", "cum_collisions_se", "runs")


def aggregate_csv(logs: Sequence[MetricsLog]) -> str:
    """Per-episode mean and standard error across runs."""
    ret = np.array([log.returns for log in logs], dtype=np.float64)
    col = np.array([log.collisions for log in logs], dtype=np.float64)
    cum = np.cumsum(col, axis=1)
    n = len(logs)

    def se(a):
        return a.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(a.shape[1])

    cols = (ret.mean(0), se(ret), col.mean(0), se(col), cum.mean(0), se(cum))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    for k in range(ret.shape[1]):
        w.writerow([k] + [f"{c[k]:.17g}" for c in cols] + [n])
    return buf.getvalue()


# theorem grid

THEOREM_HEADER = ("action_count", "unsafe_count", "correctness", "rho", "closed_form", "estimate",
                  "std_err", "feasible", "pass")


@dataclass(frozen=True)
class TheoremRow:
    params: TheoremParams
    closed_form: float
    estimate: float
    std_err: float
    feasible: bool

    @property
    def passed(self) -> bool:
        if not self.feasible:
            return False
        return abs(self.estimate - self.closed_form) <= 3.0 * self.std_err

    def csv_row(self) -> list:
        p = self.params
        return [p.action_count, p.unsafe_count, p.correctness, p.rho, f"{self.closed_form:.10g}",
                f"{self.estimate:.10g}", f"{self.std_err:.6g}", int(self.feasible), int(self.passed)]


def theorem_grid(cfg: ExperimentConfig) -> list[TheoremRow]:
    """Closed form against simulation on every grid point; each point gets its own substream."""
    root = RngStream(cfg.theorem_seed)
    rows = []
    k = 0
    for u in cfg.unsafe_counts:
        for c in cfg.correctness_grid:
            for rho in cfg.rho_grid:
                p = TheoremParams(cfg.action_count, u, c, rho)
                closed = theorem_ratio(p)
                try:
                    est, se = monte_carlo_unsafe_ratio(p, cfg.samples, root.spawn(k))
                    feasible = True
                except ValueError:
                    est, se, feasible = math.nan, math.nan, False
                rows.append(TheoremRow(p, closed, est, se, feasible))
                k += 1
    return rows


def theorem_csv(rows: Sequence[TheoremRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(THEOREM_HEADER)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


# transfer

@dataclass
class VariantTransfer:
    variant: str
    results: dict[str, TransferResult]
    sources_converged: list[bool]

    def first_window(self, mode: str, width: int = 100) -> float:
        return self.results[mode].first_window(width)

    def last_window(self, mode: str, width: int = 100) -> float:
        return self.results[mode].last_window(width)


def transfer_experiment(cfg: ExperimentConfig, source_prior_path: str | Path,
                        original_sources: Sequence[QTable] | None = None) -> list[VariantTransfer]:
    """Both initializations on every variant, sharing one set of source tables per variant."""
    out = []
    for i, variant in enumerate(cfg.variants):
        env = load_map(variant)
        if cfg.retrain_sources or original_sources is None:
            sources, _, ok = train_source_tables(env, cfg.goals, cfg.source_config(),
                                                 cfg.variant_source_seed + i, cfg.jobs)
        else:
            sources, ok = list(original_sources), [True] * len(original_sources)
        results = {}
        for mode in ("from_source", "scratch"):
            spec = TransferSpec(variant, mode, source_prior_path, train=cfg.prior_config(),
                                seeds=cfg.seeds, threshold_t=cfg.threshold_t, goals=cfg.goals,
                                source=cfg.source_config())
            results[mode] = run_transfer(spec, sources=sources)
        out.append(VariantTransfer(variant, results, ok))
    return out


# common-reward variant

@dataclass
class CommonRewardResult:
    prior: PriorModel
    selected: list[tuple[int, int]]
    toward: int
    runs: dict[str, list[TargetRun]]

    @property
    def toward_fraction(self) -> float:
        return self.toward / len(self.selected) if self.selected else math.nan

    def early_return(self, arm: str, episodes: int = 200) -> tuple[float, float]:
        """Mean and standard error across seeds of the per-seed mean return over early episodes."""
        return mean_and_stderr([float(np.mean(r.log.returns[:episodes])) for r in self.runs[arm]])


def reduces_distance(env: MapSpec, s: int, a: int, targets: Sequence[int]) -> bool:
    """Noise-free move from ``s`` by ``a`` ends closer (Manhattan) to the nearest target."""
    x, y = env.xy(s)
    dx, dy = DELTAS[a]
    nx, ny = x + dx, y + dy
    if not env.in_bounds(nx, ny) or env.kind(nx, ny) == CellKind.OBSTACLE:
        return False
    t = env.state(nx, ny)
    return min(manhattan(env, t, c) for c in targets) < min(manhattan(env, s, c) for c in targets)


def common_reward_experiment(cfg: ExperimentConfig, sources: Sequence[QTable] | None = None):
    """Seek-mode prior on a map with a rewarding cell, then greedy-prior biased target runs."""
    env = load_map(cfg.map)
    if not env.common_states:
        raise ValueError(f"map {cfg.map!r} has no common-reward cell")
    if sources is None:
        # sources may settle on circling the rewarding cell, so the goal-reach check cannot gate them
        scfg = SourceConfig(chunk=cfg.common_source_episodes, max_episodes=cfg.common_source_episodes,
                            horizon=cfg.horizon, params=cfg.params,
                            explore=cfg.source_config().explore)
        sources, _, _ = train_source_tables(env, cfg.goals, scfg, cfg.source_seed, cfg.jobs)
    prior, _ = learn_prior(env, sources, cfg, mode="seek")
    selected = prior.selected_pairs(env.open_states)
    toward = sum(reduces_distance(env, s, a, env.common_states) for s, a in selected)
    target = with_goal(env, cfg.target_goal)
    runs = paired_target_runs(target, prior.q_p, cfg, bias="seek")
    return CommonRewardResult(prior, selected, toward, runs)
