"""Flat ``key = value`` experiment configuration.

Every field has a default; a config file only lists what it changes. Lists
are comma separated. The resolved configuration is written back in the same
format, so an echoed file reproduces a run on its own.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from os import PathLike
from pathlib import Path
from typing import Any

from .explore import EXPLORE_MODES, ExploreConfig
from .learner import SourceConfig, TrainConfig
from .mdp import DiscountedParams
from .prior import MODES


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    map: str = "original"
    goals: tuple[str, ...] = ("omega1", "omega2", "omega3", "omega4")
    target_goal: str = "target"
    seeds: tuple[int, ...] = tuple(range(10))
    out: str = "runs"
    jobs: int = 1

    episodes: int = 2000
    horizon: int = 500
    alpha: float = 0.05
    gamma: float = 0.95
    epsilon0: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    rho: float = 0.95
    threshold_t: float = 0.35
    mode: str = "avoid"

    source_seed: int = 1000
    source_chunk: int = 4000
    source_max_episodes: int = 60000
    source_epsilon_decay: float = 0.999
    source_epsilon_min: float = 0.3
    sources_dir: str = ""

    common_source_episodes: int = 8000

    prior_seed: int = 7
    prior_episodes: int = 2000
    prior_path: str = ""

    variants: tuple[str, ...] = ("variant_a", "variant_b", "variant_c", "variant_d")
    retrain_sources: bool = True
    variant_source_seed: int = 2000

    action_count: int = 4
    unsafe_counts: tuple[int, ...] = (1, 2, 3)
    correctness_grid: tuple[float, ...] = (0.5, 0.9, 1.0)
    rho_grid: tuple[float, ...] = (0.0, 0.5, 0.95, 1.0)
    samples: int = 1_000_000
    theorem_seed: int = 11

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.common_source_episodes < 1:
            raise ConfigError("common_source_episodes must be positive")
        if self.threshold_t < 0:
            raise ConfigError("threshold_t must be non-negative")
        try:
            self.train_config()
            self.source_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def params(self) -> DiscountedParams:
        return DiscountedParams(self.alpha, self.gamma)

    def explore_config(self, prior_mode: str | None = None) -> ExploreConfig:
        """Task exploration; ``prior_mode`` picks the biasing rule (defaults to ``mode``)."""
        bias = prior_mode if prior_mode is not None else self.mode
        if bias not in EXPLORE_MODES:
            raise ConfigError(f"unknown exploration mode {bias!r}")
        return ExploreConfig(self.epsilon0, self.epsilon_decay, self.epsilon_min, self.rho, bias)

    def train_config(self, prior_enabled: bool = False) -> TrainConfig:
        return TrainConfig(episodes=self.episodes, horizon=self.horizon, params=self.params,
                           explore=self.explore_config(), prior_enabled=prior_enabled)

    def prior_config(self) -> TrainConfig:
        return TrainConfig(episodes=self.prior_episodes, horizon=self.horizon, params=self.params,
                           explore=self.explore_config())

    def source_config(self) -> SourceConfig:
        return SourceConfig(
            chunk=self.source_chunk, max_episodes=self.source_max_episodes, horizon=self.horizon,
            params=self.params,
            explore=ExploreConfig(self.epsilon0, self.source_epsilon_decay, self.source_epsilon_min,
                                  mode="none"),
        )

    def with_overrides(self, **kw: Any) -> "ExperimentConfig":
        try:
            return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "seeds" and len(v) == 1:
                v = f"{v[0]}-{v[0]}"  # a bare number would read back as a count
            elif isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(name: str, raw: str) -> Any:
    kind = _FIELDS[name].type
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if name == "seeds":
            return parse_seeds(raw)
        if kind.startswith("tuple[int"):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind.startswith("tuple[float"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind.startswith("tuple[str"):
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_seeds(raw: str) -> tuple[int, ...]:
    """``"10"`` means seeds 0..9; ``"3,5,8"`` and ``"0-4"`` list them."""
    raw = raw.strip()
    if "," not in raw and "-" not in raw:
        return tuple(range(int(raw)))
    out: list[int] = []
    for part in raw.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def parse_assignments(lines: list[str], source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def load_config(path: str | PathLike | None = None, overrides: dict[str, Any] | None = None,
                assignments: list[str] | None = None,
                base: dict[str, Any] | None = None) -> ExperimentConfig:
    values: dict[str, Any] = dict(base or {})
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_assignments(p.read_text().splitlines(), str(p)))
    if assignments:
        values.update(parse_assignments(assignments, "--set"))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
