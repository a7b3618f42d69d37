"""Synthetic trajectories under the random, EPR and m-EPR models.

Time advances in global steps. At ``t = 0`` every agent is placed uniformly
at random and the placement counts as one visit. In each later step an agent
activates with its own probability and makes ``moves_per_activation`` moves,
all sampled against popularity counts frozen at the end of the previous
step; the step's visits are merged into the table only after every agent
has moved.

Every agent owns a ``random.Random`` stream derived from ``(seed, index)``,
so the moves emitted for a step do not depend on agent processing order.
"""
from __future__ import annotations

import bisect
import hashlib
import random
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .core import GridSpec, MovementEvent, grid_id
from .popularity import PopularityTable

DEFAULT_LOCATIONS = 20000


class ConfigError(ValueError):
    """Invalid simulation or run configuration; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class Model(str, Enum):
    RANDOM = "random"
    EPR = "epr"
    MEPR = "mepr"


@dataclass(frozen=True)
class Activation:
    """How often agents act.

    ``always`` activates every agent in every step; ``per_agent_uniform``
    draws one activity probability per agent from ``U(lo, hi)``; ``file``
    reads one probability per line (the first ``agents`` lines are used).
    """

    kind: str = "per_agent_uniform"
    lo: float = 0.05
    hi: float = 1.0
    path: str | None = None

    KINDS = ("always", "per_agent_uniform", "file")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigError("activation", f"unknown kind {self.kind!r}")
        if self.kind == "per_agent_uniform" and not 0 < self.lo <= self.hi <= 1:
            raise ConfigError("activation", "need 0 < lo <= hi <= 1")
        if self.kind == "file" and not self.path:
            raise ConfigError("activation", "file activation needs a path")

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "always":
            return {"kind": "always"}
        if self.kind == "file":
            return {"kind": "file", "path": self.path}
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_value(cls, value: Any) -> Activation:
        """Accept a dict, or a CLI string ``always|uniform:LO:HI|file:PATH``."""
        if isinstance(value, Activation):
            return value
        if isinstance(value, str):
            if value == "always":
                return cls("always")
            head, _, rest = value.partition(":")
            if head in ("uniform", "per_agent_uniform"):
                try:
                    lo, hi = (float(v) for v in rest.split(":"))
                except ValueError:
                    raise ConfigError("activation", f"bad uniform spec {value!r}") from None
                return cls("per_agent_uniform", lo, hi)
            if head == "file" and rest:
                return cls("file", path=rest)
            raise ConfigError("activation", f"cannot parse {value!r}")
        if isinstance(value, Mapping):
            unknown = set(value) - {"kind", "lo", "hi", "path"}
            if unknown:
                raise ConfigError("activation", f"unknown keys {sorted(unknown)}")
            return cls(**value)
        raise ConfigError("activation", f"cannot parse {value!r}")


@dataclass(frozen=True)
class SimConfig:
    model: Model = Model.MEPR
    agents: int = 5000
    locations: int | None = None
    steps: int = 400
    moves_per_activation: int = 4
    rho: float = 0.6
    gamma: float = 0.41
    epsilon: float = 1.0
    activation: Activation = field(default_factory=Activation)
    grid: GridSpec | None = None
    jump_exponent: float = 1.55
    seed: int = 0
    rejection_cap: int = 32

    @property
    def n_locations(self) -> int:
        if self.grid is not None:
            return self.grid.cell_count
        return DEFAULT_LOCATIONS if self.locations is None else self.locations

    def validate(self) -> None:
        try:
            Model(self.model)
        except ValueError:
            raise ConfigError("model", f"unknown model {self.model!r}") from None
        ints = ("agents", "steps", "moves_per_activation", "seed", "rejection_cap")
        for name in ints:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(name, "must be an integer")
        if self.agents < 1:
            raise ConfigError("agents", "must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps", "must be >= 0")
        if self.moves_per_activation < 1:
            raise ConfigError("moves_per_activation", "must be >= 1")
        if self.rejection_cap < 0:
            raise ConfigError("rejection_cap", "must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
        if self.grid is not None:
            if self.model != Model.EPR:
                raise ConfigError("grid", "a grid world is only supported for the epr model")
            if self.locations is not None and self.locations != self.grid.cell_count:
                raise ConfigError("locations", f"grid has {self.grid.cell_count} cells")
        elif self.locations is not None and (
                not isinstance(self.locations, int) or isinstance(self.locations, bool)):
            raise ConfigError("locations", "must be an integer")
        if self.n_locations < 2:
            raise ConfigError("locations", "must be >= 2")
        if not 0 < self.rho <= 1:
            raise ConfigError("rho", "must lie in (0, 1]")
        if self.gamma < 0:
            raise ConfigError("gamma", "must be >= 0")
        if self.epsilon < 0:
            raise ConfigError("epsilon", "must be >= 0")
        if self.jump_exponent <= 0:
            raise ConfigError("jump_exponent", "must be positive")
        if not isinstance(self.activation, Activation):
            raise ConfigError("activation", "must be an Activation")
        self.activation.validate()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["model"] = Model(self.model).value
        d["activation"] = self.activation.to_dict()
        d["grid"] = None if self.grid is None else self.grid.format()
        d["locations"] = self.n_locations
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimConfig:
        """Build a config from JSON-like data, rejecting unknown keys."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        kwargs = dict(data)
        if "model" in kwargs:
            try:
                kwargs["model"] = Model(kwargs["model"])
            except ValueError:
                raise ConfigError("model", f"unknown model {kwargs['model']!r}") from None
        if "activation" in kwargs:
            kwargs["activation"] = Activation.from_value(kwargs["activation"])
        grid = kwargs.get("grid")
        if isinstance(grid, str):
            try:
                kwargs["grid"] = GridSpec.parse(grid)
            except ValueError as exc:
                raise ConfigError("grid", str(exc)) from None
        elif isinstance(grid, Mapping):
            try:
                kwargs["grid"] = GridSpec(**grid)
            except (TypeError, ValueError) as exc:
                raise ConfigError("grid", str(exc)) from None
        for name in ("rho", "gamma", "epsilon", "jump_exponent"):
            if name in kwargs and not isinstance(kwargs[name], (int, float)):
                raise ConfigError(name, "must be a number")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def p_new(S: int, rho: float, gamma: float) -> float:
    """Exploration probability ``min(1, rho * S**-gamma)``."""
    return min(1.0, rho * S ** -gamma)


def agent_rng(seed: int, index: int) -> random.Random:
    digest = hashlib.blake2b(f"{seed}:{index}".encode(), digest_size=16).digest()
    return random.Random(int.from_bytes(digest, "big"))


@dataclass
class AgentState:
    """Mutable per-agent memory.

    ``history`` holds every visit including the initial placement, so a
    uniform pick from it is a pick proportional to personal visit counts.
    """

    current: int
    activity: float
    rng: random.Random
    visited: dict[int, int] = field(default_factory=dict)
    order: list[int] = field(default_factory=list)
    history: list[int] = field(default_factory=list)
    fallthroughs: int = 0

    @classmethod
    def placed(cls, loc: int, activity: float, rng: random.Random) -> AgentState:
        st = cls(loc, activity, rng)
        st.record(loc)
        return st

    @property
    def S(self) -> int:
        return len(self.visited)

    def record(self, loc: int) -> None:
        c = self.visited.get(loc)
        if c is None:
            self.visited[loc] = 1
            self.order.append(loc)
        else:
            self.visited[loc] = c + 1
        self.history.append(loc)
        self.current = loc


class JumpKernel:
    """Integer displacement lengths with ``P(d) ~ d**-exponent`` on ``1..d_max``."""

    def __init__(self, exponent: float, d_max: int):
        self.d_max = d_max
        acc = 0.0
        self._cdf = []
        for d in range(1, d_max + 1):
            acc += d ** -exponent
            self._cdf.append(acc)
        self._total = acc

    def draw(self, rng: random.Random) -> int:
        return bisect.bisect_right(self._cdf, rng.random() * self._total) + 1


def lattice_offset(d: int, k: int) -> tuple[int, int]:
    """The ``k``-th of the ``4d`` lattice points at Manhattan distance ``d``."""
    q, r = divmod(k, d)
    if q == 0:
        return d - r, r
    if q == 1:
        return -r, d - r
    if q == 2:
        return r - d, -r
    return r, r - d


def _uniform_unvisited(agent: AgentState, n_locations: int) -> int:
    rng = agent.rng
    if agent.S * 2 <= n_locations:
        while True:
            i = rng.randrange(n_locations)
            if i not in agent.visited:
                return i
    free = [i for i in range(n_locations) if i not in agent.visited]
    return free[rng.randrange(len(free))]


def _revisit_global(agent: AgentState, table: PopularityTable) -> int:
    counts = table.counts
    eps = table.epsilon
    order = agent.order
    weights = [counts[i] + eps for i in order]
    if sum(weights) <= 0:
        return order[agent.rng.randrange(len(order))]
    return agent.rng.choices(order, weights)[0]


def step_mepr(agent: AgentState, table: PopularityTable, cfg: SimConfig) -> int:
    """One m-EPR move; both branches are biased by global popularity.

    The explore branch rejects locations the agent has already seen (up to
    ``rejection_cap`` draws, then uniform over unvisited). When every
    location has been visited it falls through to the revisit branch and
    counts the event on ``agent.fallthroughs``. Only ``agent`` is updated.
    """
    rng = agent.rng
    if rng.random() < p_new(agent.S, cfg.rho, cfg.gamma):
        if agent.S < table.size:
            loc = -1
            for _ in range(cfg.rejection_cap):
                i = table.sample(rng)
                if i not in agent.visited:
                    loc = i
                    break
            if loc < 0:
                loc = _uniform_unvisited(agent, table.size)
            agent.record(loc)
            return loc
        agent.fallthroughs += 1
    loc = _revisit_global(agent, table)
    agent.record(loc)
    return loc


def _explore_grid(agent: AgentState, cfg: SimConfig, kernel: JumpKernel) -> int:
    grid = cfg.grid
    rng = agent.rng
    x0, y0 = grid.index_to_xy(agent.current)
    cap = max(cfg.rejection_cap, 1)
    for _ in range(cap):
        d = kernel.draw(rng)
        for _ in range(cap):
            dx, dy = lattice_offset(d, rng.randrange(4 * d))
            x, y = x0 + dx, y0 + dy
            if grid.contains(x, y):
                break
        else:
            x, y = grid.clamp(x, y)
        i = grid.xy_to_index(x, y)
        if i not in agent.visited:
            return i
    agent.fallthroughs += 1
    return _uniform_unvisited(agent, grid.cell_count)


def step_epr(agent: AgentState, cfg: SimConfig, kernel: JumpKernel | None = None) -> int:
    """One EPR move: explore a new location or return by personal counts.

    On a grid, exploration jumps a power-law distributed Manhattan distance
    in a uniformly random lattice direction; without a grid it picks
    uniformly among unvisited locations.
    """
    rng = agent.rng
    n_loc = cfg.n_locations
    if rng.random() < p_new(agent.S, cfg.rho, cfg.gamma):
        if agent.S < n_loc:
            if cfg.grid is not None:
                if kernel is None:
                    kernel = JumpKernel(cfg.jump_exponent, cfg.grid.diameter)
                loc = _explore_grid(agent, cfg, kernel)
            else:
                loc = _uniform_unvisited(agent, n_loc)
            agent.record(loc)
            return loc
        agent.fallthroughs += 1
    hist = agent.history
    loc = hist[rng.randrange(len(hist))]
    agent.record(loc)
    return loc


def step_random(agent: AgentState, cfg: SimConfig) -> int:
    loc = agent.rng.randrange(cfg.n_locations)
    agent.record(loc)
    return loc


def load_activities(path: str | Path, count: int) -> list[float]:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                p = float(line)
            except ValueError:
                raise ConfigError("activation", f"{path}:{lineno}: not a number") from None
            if not 0 < p <= 1:
                raise ConfigError("activation", f"{path}:{lineno}: probability outside (0, 1]")
            values.append(p)
    if len(values) < count:
        raise ConfigError("activation", f"{path} has {len(values)} probabilities, need {count}")
    return values[:count]


@dataclass
class SimulationResult:
    config: SimConfig
    events: list[MovementEvent]
    fallthroughs: int
    table: PopularityTable

    def metadata(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "epsilon": self.config.epsilon,
            "fallthrough_count": self.fallthroughs,
            "events": len(self.events),
        }


class Simulation:
    """Stepwise driver; ``run()`` is what most callers want."""

    def __init__(self, cfg: SimConfig):
        cfg.validate()
        self.cfg = cfg
        self.model = Model(cfg.model)
        n_loc = cfg.n_locations
        self.table = PopularityTable(n_loc, cfg.epsilon)
        if cfg.grid is not None:
            self.loc_ids = [grid_id(*cfg.grid.index_to_xy(i)) for i in range(n_loc)]
            self.kernel = JumpKernel(cfg.jump_exponent, cfg.grid.diameter)
        else:
            self.loc_ids = [f"L{i}" for i in range(n_loc)]
            self.kernel = None
        self.agent_ids = [f"a{i}" for i in range(cfg.agents)]
        self.t = 0
        self.moves = 0
        self.agents = self._place()

    def _place(self) -> list[AgentState]:
        cfg = self.cfg
        act = cfg.activation
        file_probs = load_activities(act.path, cfg.agents) if act.kind == "file" else None
        agents = []
        for a in range(cfg.agents):
            rng = agent_rng(cfg.seed, a)
            if act.kind == "always":
                activity = 1.0
            elif file_probs is not None:
                activity = file_probs[a]
            else:
                activity = rng.uniform(act.lo, act.hi)
            loc = rng.randrange(self.table.size)
            agents.append(AgentState.placed(loc, activity, rng))
            self.table.increment(loc)
        return agents

    def step(self, order: list[int] | None = None) -> list[MovementEvent]:
        """Advance one global step and return its events in agent order.

        ``order`` permutes agent processing; output is re-sorted by agent
        index so it only matters for testing order independence.
        """
        self.t += 1
        t = self.t
        cfg = self.cfg
        m = cfg.moves_per_activation
        table = self.table
        model = self.model
        kernel = self.kernel
        loc_ids = self.loc_ids
        per_agent: dict[int, list[int]] = {}
        for a in (range(len(self.agents)) if order is None else order):
            st = self.agents[a]
            if st.activity < 1.0 and st.rng.random() >= st.activity:
                continue
            moved = []
            for _ in range(m):
                if model is Model.MEPR:
                    loc = step_mepr(st, table, cfg)
                elif model is Model.EPR:
                    loc = step_epr(st, cfg, kernel)
                else:
                    loc = step_random(st, cfg)
                moved.append(loc)
            per_agent[a] = moved
        events = []
        pending: Counter[int] = Counter()
        for a in sorted(per_agent):
            aid = self.agent_ids[a]
            for loc in per_agent[a]:
                events.append(MovementEvent(aid, t, loc_ids[loc]))
                pending[loc] += 1
        for loc in sorted(pending):
            table.increment(loc, pending[loc])
        self.moves += len(events)
        return events

    @property
    def fallthroughs(self) -> int:
        return sum(st.fallthroughs for st in self.agents)

    def run(self) -> SimulationResult:
        events: list[MovementEvent] = []
        while self.t < self.cfg.steps:
            events.extend(self.step())
        return SimulationResult(self.cfg, events, self.fallthroughs, self.table)


def run_simulation(cfg: SimConfig) -> SimulationResult:
    return Simulation(cfg).run()
