"""Safety prior built from the Q-functions of solved source tasks.

For a sampled pair ``(s, a)`` every source scores how much worse ``a`` is
than the best action (scaled by the row maximum). The scores are softmaxed
into a distribution whose normalized entropy measures agreement between
sources; pairs whose ``entropy * mean score`` exceeds a threshold get a
pseudo-reward equal to the softmax-weighted rewards inferred from the source
tables. ``Q_P`` is learned off-policy on that pseudo-reward.

The "seek" mode swaps the advantage for ``Q(s, a) - min Q(s, .)`` so the
prior picks out commonly desirable actions instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Sequence

import numpy as np

from .mdp import DiscountedParams, QTable, load_qtable, save_qtable

ZERO_MAX_TOL = 1e-12
MODES = ("avoid", "seek")


def _scaled(row: np.ndarray, a: int, mode: str) -> float | None:
    top = float(row.max())
    if abs(top) <= ZERO_MAX_TOL:
        return None
    ref = top if mode == "avoid" else float(row.min())
    return abs((float(row[a]) - ref) / top)


def scaled_undesirability(q_i: QTable, s: int, a: int) -> float:
    """``|A*(s, a) / max Q(s, .)|``; 0 when the row maximum is 0 (guarded pair)."""
    q_i.check_state(s)
    q_i.check_action(a)
    w = _scaled(q_i.values[s], a, "avoid")
    return 0.0 if w is None else w


def scaled_desirability(q_i: QTable, s: int, a: int) -> float:
    """``|(Q(s, a) - min Q(s, .)) / max Q(s, .)|`` with the same zero guard."""
    q_i.check_state(s)
    q_i.check_action(a)
    w = _scaled(q_i.values[s], a, "seek")
    return 0.0 if w is None else w


def softmax_normalize(w: Sequence[float]) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or len(w) < 2:
        raise ValueError("softmax needs at least two scores")
    if not np.all(np.isfinite(w)):
        raise ValueError("scores must be finite")
    e = np.exp(w - w.max())
    return e / e.sum()


def normalized_entropy(p: Sequence[float]) -> float:
    """Shannon entropy divided by ``log N`` (natural log; ``0 log 0 = 0``)."""
    p = np.asarray(p, dtype=np.float64)
    n = len(p)
    if n < 2:
        raise ValueError("normalized entropy needs N >= 2 (log N would be 0)")
    nz = p[p > 0]
    h = float(-(nz * np.log(nz)).sum() / math.log(n))
    return min(max(h, 0.0), 1.0)


@dataclass(frozen=True)
class UndesirabilityRecord:
    w: tuple[float, ...]
    w_norm: tuple[float, ...]
    entropy: float
    mean: float
    skipped: int = 0


def undesirability_record(sources: Sequence[QTable], s: int, a: int,
                          mode: str = "avoid") -> UndesirabilityRecord:
    if len(sources) < 2:
        raise ValueError("consensus needs at least two source tables")
    if mode not in MODES:
        raise ValueError(f"unknown prior mode {mode!r}")
    w = []
    skipped = 0
    for q_i in sources:
        q_i.check_state(s)
        q_i.check_action(a)
        v = _scaled(q_i.values[s], a, mode)
        if v is None:
            skipped += 1
            v = 0.0
        w.append(v)
    w_norm = softmax_normalize(w)
    return UndesirabilityRecord(
        w=tuple(w),
        w_norm=tuple(float(x) for x in w_norm),
        entropy=normalized_entropy(w_norm),
        mean=float(np.mean(w)),
        skipped=skipped,
    )


def select(record: UndesirabilityRecord, t: float) -> bool:
    return record.entropy * record.mean > t


def threshold_bounds(r_min: float, r_max: float) -> tuple[float, float]:
    """Range of sensible selection thresholds for a reward range."""
    if r_max == 0:
        raise ValueError("threshold bound is undefined when r_max = 0")
    if r_min > r_max:
        raise ValueError("r_min must not exceed r_max")
    return 0.0, abs((r_min - r_max) / r_max)


def infer_reward(q_i: QTable, s: int, a: int, s_next: int, gamma: float,
                 terminal: bool = False) -> float:
    """Reward implied by a zero TD error: ``Q(s, a) - gamma max Q(s', .)``."""
    q_i.check_state(s)
    q_i.check_state(s_next)
    q_i.check_action(a)
    boot = 0.0 if terminal else float(q_i.values[s_next].max())
    return float(q_i.values[s, a]) - gamma * boot


def consensus_tables(sources: Sequence[QTable], mode: str = "avoid"):
    """Vectorized scores over every ``(s, a)``.

    Returns ``(w, w_norm, entropy, mean, guarded)`` with ``w`` and ``w_norm``
    shaped ``(N, S, A)``, ``entropy`` and ``mean`` shaped ``(S, A)`` and
    ``guarded`` shaped ``(N, S)`` (rows whose maximum is zero).
    """
    if len(sources) < 2:
        raise ValueError("consensus needs at least two source tables")
    if mode not in MODES:
        raise ValueError(f"unknown prior mode {mode!r}")
    shapes = {q.values.shape for q in sources}
    if len(shapes) != 1:
        raise ValueError(f"source tables disagree on shape: {sorted(shapes)}")
    qs = np.stack([q.values for q in sources])
    top = qs.max(axis=2)
    guarded = np.abs(top) <= ZERO_MAX_TOL
    ref = top if mode == "avoid" else qs.min(axis=2)
    safe_top = np.where(guarded, 1.0, top)
    w = np.abs((qs - ref[..., None]) / safe_top[..., None])
    w[guarded] = 0.0
    e = np.exp(w - w.max(axis=0, keepdims=True))
    w_norm = e / e.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(w_norm > 0, w_norm * np.log(w_norm), 0.0)
    entropy = np.clip(-plogp.sum(axis=0) / math.log(len(sources)), 0.0, 1.0)
    return w, w_norm, entropy, w.mean(axis=0), guarded


@dataclass
class PriorModel:
    """``Q_P`` together with the source tables and settings that shape it.

    ``source_goals`` lists, per source, the terminal states of that task; the
    reward inference bootstraps with 0 there.
    """

    q_p: QTable
    sources: list[QTable]
    threshold_t: float = 0.35
    params: DiscountedParams = field(default_factory=DiscountedParams)
    mode: str = "avoid"
    source_labels: list[str] = field(default_factory=list)
    source_goals: list[frozenset[int]] = field(default_factory=list)
    zero_max_skips: int = 0
    updates: int = 0

    def __post_init__(self):
        if len(self.sources) < 2:
            raise ValueError("a prior needs at least two source tasks")
        if self.mode not in MODES:
            raise ValueError(f"unknown prior mode {self.mode!r}")
        if self.threshold_t < 0:
            raise ValueError("threshold t must be non-negative")
        for q in self.sources:
            if q.values.shape != self.q_p.values.shape:
                raise ValueError("source and prior tables must share dimensions")
        if not self.source_labels:
            self.source_labels = [f"source{i}" for i in range(len(self.sources))]
        if not self.source_goals:
            self.source_goals = [frozenset() for _ in self.sources]
        self._build_cache()

    @classmethod
    def fresh(cls, sources: Sequence[QTable], **kwargs) -> "PriorModel":
        s, a = sources[0].values.shape
        return cls(q_p=QTable.zeros(s, a), sources=list(sources), **kwargs)

    def _build_cache(self) -> None:
        # plain lists: the training loops read these one element at a time
        w, w_norm, entropy, mean, guarded = consensus_tables(self.sources, self.mode)
        self.selected_mask = entropy * mean > self.threshold_t
        self._selected = self.selected_mask.tolist()
        self._weights = np.moveaxis(w_norm, 0, -1).tolist()
        qs = np.stack([q.values for q in self.sources])
        self._qsa = np.moveaxis(qs, 0, -1).tolist()
        boot = qs.max(axis=2)
        for i, goals in enumerate(self.source_goals):
            for g in goals:
                boot[i, g] = 0.0
        self._boot = boot.T.tolist()
        self._guard_counts = guarded.sum(axis=0).tolist()

    def record(self, s: int, a: int) -> UndesirabilityRecord:
        return undesirability_record(self.sources, s, a, self.mode)

    def pseudo_reward(self, s: int, a: int, s_next: int, terminal: bool = False) -> float:
        if not self._selected[s][a]:
            return 0.0
        gamma = self.params.gamma
        r = 0.0
        if terminal:
            for wi, qi in zip(self._weights[s][a], self._qsa[s][a]):
                r += wi * qi
        else:
            for wi, qi, bi in zip(self._weights[s][a], self._qsa[s][a], self._boot[s_next]):
                r += wi * (qi - gamma * bi)
        return 1.0 if r > 1.0 else (-1.0 if r < -1.0 else r)

    def update(self, values, s: int, a: int, s_next: int, terminal: bool = False) -> float:
        """One Q_P update on ``values`` (the live table or a list copy); returns the TD error."""
        r = self.pseudo_reward(s, a, s_next, terminal)
        self.zero_max_skips += self._guard_counts[s]
        self.updates += 1
        row = values[s]
        target = r if terminal else r + self.params.gamma * max(values[s_next])
        td = target - row[a]
        row[a] += self.params.alpha * td
        return td

    def selected_pairs(self, states: Sequence[int] | None = None) -> list[tuple[int, int]]:
        states = range(self.q_p.state_count) if states is None else states
        return [(s, a) for s in states for a in range(self.q_p.action_count) if self._selected[s][a]]


def pseudo_reward(prior: PriorModel, s: int, a: int, s_next: int, terminal: bool = False) -> float:
    """Clamped consensus-weighted inferred reward, 0 for unselected pairs."""
    prior.q_p.check_state(s)
    prior.q_p.check_state(s_next)
    prior.q_p.check_action(a)
    return prior.pseudo_reward(s, a, s_next, terminal)


def prior_update_step(prior: PriorModel, s: int, a: int, s_next: int,
                      terminal: bool = False) -> float:
    """Update ``prior.q_p`` in place from one transition; returns the TD error."""
    prior.q_p.check_state(s)
    prior.q_p.check_state(s_next)
    prior.q_p.check_action(a)
    return prior.update(prior.q_p.values, s, a, s_next, terminal)


def save_prior(prior: PriorModel, path: str | PathLike, source_ids: Sequence[str] | None = None) -> None:
    """Write ``Q_P`` as a Q-table file plus a ``.meta.json`` sidecar."""
    path = Path(path)
    save_qtable(prior.q_p, path)
    meta = {
        "threshold_t": prior.threshold_t,
        "alpha": prior.params.alpha,
        "gamma": prior.params.gamma,
        "mode": prior.mode,
        "sources": list(source_ids) if source_ids is not None else list(prior.source_labels),
        "updates": prior.updates,
        "zero_max_skips": prior.zero_max_skips,
    }
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def meta_path(path: str | PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def load_prior_table(path: str | PathLike) -> tuple[QTable, dict]:
    path = Path(path)
    q = load_qtable(path)
    mp = meta_path(path)
    meta = json.loads(mp.read_text()) if mp.exists() else {}
    return q, meta
