"""Domain types shared by the simulator, network builder and analysis code.

Locations are opaque strings. Grid worlds use the canonical ``"x,y"`` form
with signed integer coordinates; everything else (contracts, synthetic
``L123`` ids) is compared byte-exact after trimming whitespace.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Iterable, Mapping, NamedTuple


class GridParseError(ValueError):
    """A location id that should be an ``"x,y"`` grid cell is not one."""

    def __init__(self, loc: str):
        super().__init__(f"not a grid location id: {loc!r}")
        self.loc = loc


@dataclass(frozen=True)
class GridSpec:
    x_min: int = -150
    x_max: int = 150
    y_min: int = -150
    y_max: int = 150

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"empty grid bounds: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def cell_count(self) -> int:
        return self.width * self.height

    @property
    def diameter(self) -> int:
        return self.width - 1 + self.height - 1

    def contains(self, x: int, y: int) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def clamp(self, x: int, y: int) -> tuple[int, int]:
        return (min(max(x, self.x_min), self.x_max),
                min(max(y, self.y_min), self.y_max))

    def index_to_xy(self, index: int) -> tuple[int, int]:
        row, col = divmod(index, self.width)
        return self.x_min + col, self.y_min + row

    def xy_to_index(self, x: int, y: int) -> int:
        return (y - self.y_min) * self.width + (x - self.x_min)

    @classmethod
    def parse(cls, text: str) -> GridSpec:
        """Parse ``"x0:x1,y0:y1"`` (e.g. ``"-150:150,-150:150"``)."""
        try:
            xs, ys = text.split(",")
            x0, x1 = (int(v) for v in xs.split(":"))
            y0, y1 = (int(v) for v in ys.split(":"))
        except ValueError:
            raise ValueError(f"grid bounds must look like x0:x1,y0:y1, got {text!r}") from None
        return cls(x0, x1, y0, y1)

    def format(self) -> str:
        return f"{self.x_min}:{self.x_max},{self.y_min}:{self.y_max}"


def grid_id(x: int, y: int) -> str:
    return f"{x},{y}"


def parse_grid_id(loc: str, grid: GridSpec | None = None) -> tuple[int, int]:
    """Return the integer coordinates of a grid-form location id.

    Raises:
        GridParseError: if ``loc`` is not ``"x,y"`` or lies outside ``grid``.
    """
    parts = loc.strip().split(",")
    if len(parts) != 2:
        raise GridParseError(loc)
    try:
        x, y = int(parts[0]), int(parts[1])
    except ValueError:
        raise GridParseError(loc) from None
    if grid is not None and not grid.contains(x, y):
        raise GridParseError(loc)
    return x, y


def manhattan_distance(a: str, b: str) -> int:
    ax, ay = parse_grid_id(a)
    bx, by = parse_grid_id(b)
    return abs(ax - bx) + abs(ay - by)


class MovementEvent(NamedTuple):
    agent: str
    t: int
    loc: str


@dataclass(frozen=True)
class Trajectory:
    agent: str
    events: tuple[MovementEvent, ...]

    def __post_init__(self):
        if not self.events:
            raise ValueError(f"empty trajectory for agent {self.agent!r}")
        for ev in self.events:
            if ev.agent != self.agent:
                raise ValueError(f"event for {ev.agent!r} in trajectory of {self.agent!r}")

    @property
    def locations(self) -> list[str]:
        return [ev.loc for ev in self.events]

    @property
    def times(self) -> list[int]:
        return [ev.t for ev in self.events]

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def S(self) -> int:
        return len(set(self.locations))

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class AgentStats:
    agent: str
    n: int
    S: int
    f_mean: float
    sigma_f: float
    visit_counts: Mapping[str, int]


class Quantity(str, Enum):
    VISITORS = "visitors"
    DEGREE = "degree"
    WEIGHT = "weight"
    EXPLORATION = "exploration"
    RANK_FREQUENCY = "rank_frequency"
    FLUCTUATION = "fluctuation"
    GAMMA = "gamma"
    PREFERENTIAL = "preferential"
    DEGREE_VISITORS = "degree_visitors"
    NEIGHBORHOOD = "neighborhood"
    RANKED_DISTANCE = "ranked_distance"
    GENERIC = "generic"


class Estimator(str, Enum):
    MLE = "mle"
    OLS = "ols"


@dataclass(frozen=True)
class FitResult:
    """One fitted exponent.

    Distribution fits report ``exponent`` as the positive decay exponent;
    slope fits report the signed slope (negated where the quantity is
    defined as a decay, e.g. rank-frequency and ``gamma``). ``ks_stat`` is
    only meaningful for MLE fits and ``r_squared`` only for OLS fits.
    """

    quantity: Quantity
    estimator: Estimator
    exponent: float
    stderr: float
    xmin: float
    n_samples: int
    ks_stat: float | None = None
    r_squared: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantity"] = Quantity(self.quantity).value
        d["estimator"] = Estimator(self.estimator).value
        return d


def canonicalize_trajectories(events: Iterable[MovementEvent]) -> dict[str, Trajectory]:
    """Group events by agent and sort each group by time.

    Ties in ``t`` keep input order (the sort is stable), duplicates are kept,
    and the returned dict iterates agents in lexicographic order.

    Raises:
        ValueError: on a negative time, naming the 1-based record position.
    """
    groups: dict[str, list[MovementEvent]] = {}
    for pos, ev in enumerate(events, start=1):
        if ev.t < 0:
            raise ValueError(f"record {pos}: negative time {ev.t}")
        groups.setdefault(ev.agent, []).append(ev)
    out: dict[str, Trajectory] = {}
    for agent in sorted(groups):
        evs = groups[agent]
        evs.sort(key=lambda e: e.t)
        out[agent] = Trajectory(agent, tuple(evs))
    return out


def flatten(trajs: Mapping[str, Trajectory]) -> list[MovementEvent]:
    return [ev for traj in trajs.values() for ev in traj.events]


def agent_stats(traj: Trajectory) -> AgentStats:
    counts = Counter(traj.locations)
    n = traj.n
    S = len(counts)
    f_mean = n / S
    var = sum((c - f_mean) ** 2 for c in counts.values()) / S
    return AgentStats(traj.agent, n, S, f_mean, math.sqrt(var), dict(counts))
