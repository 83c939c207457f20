"""Safety metrics for learned priors and a check of the unsafe-exploration bound."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gridworld import MapSpec, true_unsafe_actions
from .learner import MetricsLog
from .mdp import QTable
from .prior import PriorModel
from .rng import RngStream

MIN_SAMPLES = 10_000


class UndefinedCorrectness(ValueError):
    """Correctness has a zero denominator (no unsafe actions identified or missed)."""


@dataclass(frozen=True)
class ConfusionCounts:
    n_FP: int
    n_FN: int
    n_I: int

    def __post_init__(self):
        if min(self.n_FP, self.n_FN, self.n_I) < 0:
            raise ValueError("counts must be non-negative")
        if self.n_I < self.n_FP:
            raise ValueError("false positives cannot exceed identified unsafe actions")


@dataclass(frozen=True)
class TheoremParams:
    action_count: int
    unsafe_count: int
    correctness: float
    rho: float
    epsilon: float = 1.0

    def __post_init__(self):
        if self.action_count < 2:
            raise ValueError("need at least two actions")
        if not 1 <= self.unsafe_count:
            raise ValueError("unsafe_count must be at least 1")
        if self.unsafe_count >= self.action_count:
            raise ValueError("unsafe_count must be below action_count")
        if not 0.0 <= self.correctness <= 1.0:
            raise ValueError("correctness must lie in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")


def prior_unsafe_set(q_p: QTable, s: int) -> frozenset[int]:
    """Actions whose prior value is strictly below the state's mean."""
    q_p.check_state(s)
    row = q_p.values[s].tolist()
    mean = sum(row) / len(row)
    return frozenset(a for a, v in enumerate(row) if v < mean)


def correctness(counts: ConfusionCounts) -> float:
    denom = counts.n_I - counts.n_FP + counts.n_FN
    if denom <= 0:
        raise UndefinedCorrectness("correctness undefined: n_I - n_FP + n_FN = 0")
    return 1.0 - counts.n_FN / denom


@dataclass(frozen=True)
class PriorEvaluation:
    counts: ConfusionCounts
    prior_unsafe: dict[int, frozenset[int]]
    true_unsafe: dict[int, frozenset[int]]

    @property
    def correctness(self) -> float:
        return correctness(self.counts)

    @property
    def n_true_unsafe(self) -> int:
        return sum(len(v) for v in self.true_unsafe.values())


def evaluate_prior(q_p: QTable, env: MapSpec) -> PriorEvaluation:
    """Compare the prior's unsafe sets with the map's collision actions over all open cells."""
    if q_p.values.shape != (env.state_count, env.action_count):
        raise ValueError(f"prior shape {q_p.values.shape} does not match map "
                         f"({env.state_count}, {env.action_count})")
    fp = fn = n_i = 0
    prior_sets, true_sets = {}, {}
    for s in env.open_states:
        flagged = prior_unsafe_set(q_p, s)
        truth = true_unsafe_actions(env, s)
        prior_sets[s], true_sets[s] = flagged, truth
        n_i += len(flagged)
        fp += len(flagged - truth)
        fn += len(truth - flagged)
    return PriorEvaluation(ConfusionCounts(fp, fn, n_i), prior_sets, true_sets)


def selection_precision(prior: PriorModel, env: MapSpec) -> tuple[float, int, int]:
    """Share of threshold-selected pairs that are collision actions: ``(precision, hits, selected)``."""
    selected = prior.selected_pairs(env.open_states)
    hits = sum(a in true_unsafe_actions(env, s) for s, a in selected)
    return (hits / len(selected) if selected else math.nan), hits, len(selected)


def theorem_ratio(p: TheoremParams) -> float:
    """Closed-form ratio of unsafe exploratory-action probability, biased over plain epsilon-greedy."""
    A, U = p.action_count, p.unsafe_count
    return 1.0 - p.rho * (A * p.correctness - U) / (A - U)


def false_negative_draw_rate(p: TheoremParams) -> float:
    """Chance that a draw among the prior-safe actions is truly unsafe.

    The bias branch keeps ``|A| - U`` actions, of which ``U (1 - C)`` are
    missed unsafe ones on average.
    """
    return p.unsafe_count * (1.0 - p.correctness) / (p.action_count - p.unsafe_count)


def monte_carlo_unsafe_ratio(p: TheoremParams, samples: int, rng: RngStream,
                             batch: int = 1 << 20) -> tuple[float, float]:
    """Simulate biased exploration steps and estimate the unsafe-probability ratio.

    Each sample is one step: exploratory with probability epsilon; then with
    probability rho a uniform draw from the prior-safe actions (truly unsafe at
    :func:`false_negative_draw_rate`), otherwise a uniform draw over all
    actions of which ``U`` are unsafe. Returns ``(estimate, standard error)``
    of ``P(unsafe) / (epsilon U / |A|)``.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    q = false_negative_draw_rate(p)
    if q > 1.0 and p.rho > 0.0:
        raise ValueError(
            f"U(1-C) = {p.unsafe_count * (1 - p.correctness):g} missed unsafe actions cannot fit "
            f"among {p.action_count - p.unsafe_count} prior-safe actions")
    gen = rng.generator()
    A, U = p.action_count, p.unsafe_count
    hits = 0
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        explore = gen.random(n) < p.epsilon
        biased = gen.random(n) < p.rho
        u = gen.random(n)
        uniform_unsafe = gen.integers(0, A, n) < U
        unsafe = explore & np.where(biased, u < q, uniform_unsafe)
        hits += int(unsafe.sum())
        done += n
    base = p.epsilon * U / A
    mean = hits / samples
    std_err = math.sqrt(mean * (1.0 - mean) / samples)
    return mean / base, std_err / base


@dataclass(frozen=True)
class TdTrace:
    mean: np.ndarray
    std_err: np.ndarray
    runs: int

    def window_mean(self, start: int, stop: int) -> float:
        return float(np.mean(self.mean[start:stop]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("episode", "mean_abs_td", "std_err", "runs"))
        for k, (m, e) in enumerate(zip(self.mean, self.std_err)):
            w.writerow((k, f"{m:.17g}", f"{e:.17g}", self.runs))
        return buf.getvalue()


def td_error_trace(logs: Sequence[MetricsLog]) -> TdTrace:
    """Per-episode mean and standard error of the prior's |TD| across runs."""
    if not logs:
        raise ValueError("need at least one run")
    lengths = {len(log) for log in logs}
    if len(lengths) != 1:
        raise ValueError(f"runs differ in episode count: {sorted(lengths)}")
    data = np.array([log.prior_td for log in logs], dtype=np.float64)
    mean = data.mean(axis=0)
    if len(logs) > 1:
        std_err = data.std(axis=0, ddof=1) / math.sqrt(len(logs))
    else:
        std_err = np.zeros_like(mean)
    return TdTrace(mean, std_err, len(logs))


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(len(arr)))
