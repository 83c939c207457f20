"""Noisy navigation gridworld.

Map text is a rectangular block of ``#`` (obstacle), ``.`` (free),
``G`` (terminal goal) and ``C`` (non-terminal common-reward cell). Lines that
start with ``@`` are directives::

    @goal omega1 2 0        named goal cell (x = column, y = row from the top)
    @common_reward 0.2      reward for landing in a C cell
    @noise 0.2              half-width of the uniform position noise

The agent keeps a continuous pose; each action moves it one unit plus
independent uniform noise on both axes, and the state is the containing cell.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from os import PathLike
from pathlib import Path
from typing import NamedTuple

from .rng import RngStream

UP, RIGHT, DOWN, LEFT = range(4)
ACTION_NAMES = ("up", "right", "down", "left")
DELTAS = ((0, -1), (1, 0), (0, 1), (-1, 0))

STEP_REWARD = -0.1
COLLISION_REWARD = -1.0
GOAL_REWARD = 1.0


class CellKind(enum.IntEnum):
    FREE = 0
    OBSTACLE = 1
    GOAL = 2
    COMMON = 3


_CHARS = {".": CellKind.FREE, "#": CellKind.OBSTACLE, "G": CellKind.GOAL, "C": CellKind.COMMON}
_SYMBOLS = {v: k for k, v in _CHARS.items()}


class MapParseError(ValueError):
    def __init__(self, msg: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + msg)
        self.line = line
        self.column = column


class AgentPose(NamedTuple):
    x: float
    y: float


class StepOutcome(NamedTuple):
    next_state: int
    reward: float
    terminal: bool
    collided: bool
    pose: AgentPose


@dataclass(frozen=True)
class MapSpec:
    width: int
    height: int
    cells: tuple[CellKind, ...]
    labels: dict[str, tuple[int, int]] = field(default_factory=dict, compare=False)
    common_reward_value: float = 0.0
    noise: float = 0.2
    name: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("map dimensions must be positive")
        if len(self.cells) != self.width * self.height:
            raise ValueError("cell count does not match dimensions")
        if all(c == CellKind.OBSTACLE for c in self.cells):
            raise ValueError("map has no traversable cell")
        if not 0.0 <= self.noise < 0.5:
            raise ValueError("noise half-width must lie in [0, 0.5)")
        for label, (x, y) in self.labels.items():
            if not self.in_bounds(x, y):
                raise ValueError(f"goal {label!r} at ({x}, {y}) is out of bounds")
            if self.kind(x, y) == CellKind.OBSTACLE:
                raise ValueError(f"goal {label!r} at ({x}, {y}) is on an obstacle")

    @property
    def state_count(self) -> int:
        return self.width * self.height

    @property
    def action_count(self) -> int:
        return 4

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def kind(self, x: int, y: int) -> CellKind:
        return self.cells[y * self.width + x]

    def state(self, x: int, y: int) -> int:
        return y * self.width + x

    def xy(self, s: int) -> tuple[int, int]:
        return s % self.width, s // self.width

    @cached_property
    def goal_states(self) -> tuple[int, ...]:
        return tuple(s for s, c in enumerate(self.cells) if c == CellKind.GOAL)

    @property
    def goal(self) -> tuple[int, int]:
        if len(self.goal_states) != 1:
            raise ValueError(f"map has {len(self.goal_states)} goal cells, expected exactly one")
        return self.xy(self.goal_states[0])

    @cached_property
    def start_states(self) -> tuple[int, ...]:
        return tuple(s for s, c in enumerate(self.cells) if c == CellKind.FREE)

    @cached_property
    def open_states(self) -> tuple[int, ...]:
        """All non-obstacle, non-goal cells (where an agent can act)."""
        return tuple(s for s, c in enumerate(self.cells) if c in (CellKind.FREE, CellKind.COMMON))

    @cached_property
    def common_states(self) -> tuple[int, ...]:
        return tuple(s for s, c in enumerate(self.cells) if c == CellKind.COMMON)

    def to_text(self) -> str:
        lines = [f"@goal {k} {x} {y}" for k, (x, y) in self.labels.items()]
        if self.common_reward_value:
            lines.append(f"@common_reward {self.common_reward_value!r}")
        if self.noise != 0.2:
            lines.append(f"@noise {self.noise!r}")
        for y in range(self.height):
            lines.append("".join(_SYMBOLS[self.kind(x, y)] for x in range(self.width)))
        return "\n".join(lines) + "\n"


def parse_map(text: str, require_goal: bool = True) -> MapSpec:
    labels: dict[str, tuple[int, int]] = {}
    options: dict[str, float] = {}
    rows: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line:
            if rows:
                rows.append((lineno, ""))
            continue
        if line.startswith("@"):
            parts = line[1:].split()
            try:
                if parts[0] == "goal" and len(parts) == 4:
                    labels[parts[1]] = (int(parts[2]), int(parts[3]))
                elif parts[0] in ("common_reward", "noise") and len(parts) == 2:
                    options[parts[0]] = float(parts[1])
                else:
                    raise MapParseError(f"unknown directive {line!r}", lineno)
            except (ValueError, IndexError) as exc:
                if isinstance(exc, MapParseError):
                    raise
                raise MapParseError(f"malformed directive {line!r}", lineno) from None
            continue
        rows.append((lineno, line))
    while rows and not rows[-1][1]:
        rows.pop()
    if not rows:
        raise MapParseError("map contains no grid rows")
    width = len(rows[0][1])
    cells: list[CellKind] = []
    for lineno, line in rows:
        if len(line) != width:
            raise MapParseError(f"ragged row: expected width {width}, got {len(line)}", lineno)
        for col, ch in enumerate(line, start=1):
            if ch not in _CHARS:
                raise MapParseError(f"unknown map character {ch!r}", lineno, col)
            cells.append(_CHARS[ch])
    if require_goal and CellKind.GOAL not in cells:
        raise MapParseError("task map has no goal cell")
    if CellKind.COMMON in cells and "common_reward" not in options:
        options["common_reward"] = 0.0
    try:
        return MapSpec(
            width=width,
            height=len(rows),
            cells=tuple(cells),
            labels=labels,
            common_reward_value=options.get("common_reward", 0.0),
            noise=options.get("noise", 0.2),
        )
    except ValueError as exc:
        raise MapParseError(str(exc)) from None


def load_map(path: str | PathLike, require_goal: bool = True) -> MapSpec:
    """Load a map file; bare names such as ``original`` resolve to shipped maps."""
    p = Path(path)
    if not p.exists() and p.suffix in ("", ".map") and p.parent == Path("."):
        ref = resources.files("safeprior") / "maps" / (p.stem + ".map")
        if ref.is_file():
            return replace(parse_map(ref.read_text(), require_goal), name=p.stem)
    if not p.exists():
        raise FileNotFoundError(f"map file not found: {path}")
    return replace(parse_map(p.read_text(), require_goal), name=p.stem)


def shipped_maps() -> list[str]:
    return sorted(f.name[:-4] for f in (resources.files("safeprior") / "maps").iterdir()
                  if f.name.endswith(".map"))


def with_goal(env: MapSpec, goal: str | tuple[int, int]) -> MapSpec:
    """Task map with a single goal, either a labelled location or ``(x, y)``."""
    if isinstance(goal, str):
        if goal not in env.labels:
            raise ValueError(f"map has no goal labelled {goal!r}")
        x, y = env.labels[goal]
    else:
        x, y = goal
    if not env.in_bounds(x, y):
        raise ValueError(f"goal ({x}, {y}) is out of bounds")
    if env.kind(x, y) == CellKind.OBSTACLE:
        raise ValueError(f"goal ({x}, {y}) is on an obstacle")
    cells = [CellKind.FREE if c == CellKind.GOAL else c for c in env.cells]
    cells[env.state(x, y)] = CellKind.GOAL
    return replace(env, cells=tuple(cells))


def pose_state(env: MapSpec, pose: AgentPose) -> int:
    return math.floor(pose.y) * env.width + math.floor(pose.x)


def cell_center(env: MapSpec, s: int) -> AgentPose:
    x, y = env.xy(s)
    return AgentPose(x + 0.5, y + 0.5)


def reset(env: MapSpec, rng: RngStream) -> tuple[int, AgentPose]:
    """Uniform random free, non-goal start cell and the pose at its centre."""
    starts = env.start_states
    if not starts:
        raise ValueError("map has no free non-goal cell to start from")
    s = starts[rng.integers(len(starts))]
    return s, cell_center(env, s)


def step(env: MapSpec, pose: AgentPose, a: int, rng: RngStream) -> StepOutcome:
    if not 0 <= a < 4:
        raise IndexError(f"invalid action {a}")
    dx, dy = DELTAS[a]
    nx = pose.x + dx
    ny = pose.y + dy
    noise = env.noise
    if noise > 0.0:
        nx += rng.uniform(-noise, noise)
        ny += rng.uniform(-noise, noise)
    cx = math.floor(nx)
    cy = math.floor(ny)
    w = env.width
    if not (0 <= cx < w and 0 <= cy < env.height) or env.cells[cy * w + cx] == CellKind.OBSTACLE:
        s = math.floor(pose.y) * w + math.floor(pose.x)
        return StepOutcome(s, COLLISION_REWARD, False, True, pose)
    s_next = cy * w + cx
    kind = env.cells[s_next]
    new_pose = AgentPose(nx, ny)
    if kind == CellKind.GOAL:
        return StepOutcome(s_next, GOAL_REWARD, True, False, new_pose)
    if kind == CellKind.COMMON:
        return StepOutcome(s_next, env.common_reward_value, False, False, new_pose)
    return StepOutcome(s_next, STEP_REWARD, False, False, new_pose)


def true_unsafe_actions(env: MapSpec, s: int) -> frozenset[int]:
    """Actions whose noise-free target cell is an obstacle or off the grid."""
    x, y = env.xy(s)
    unsafe = set()
    for a, (dx, dy) in enumerate(DELTAS):
        tx, ty = x + dx, y + dy
        if not env.in_bounds(tx, ty) or env.kind(tx, ty) == CellKind.OBSTACLE:
            unsafe.add(a)
    return frozenset(unsafe)


def unsafe_mask(env: MapSpec) -> list[list[bool]]:
    """``mask[s][a]`` is True for collision actions; rows of non-open cells are all False."""
    mask = [[False] * 4 for _ in range(env.state_count)]
    for s in env.open_states:
        for a in true_unsafe_actions(env, s):
            mask[s][a] = True
    return mask


def manhattan(env: MapSpec, s: int, t: int) -> int:
    (x0, y0), (x1, y1) = env.xy(s), env.xy(t)
    return abs(x0 - x1) + abs(y0 - y1)
