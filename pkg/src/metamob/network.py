"""Mobility networks built from trajectories, graph distances and null models."""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import GridSpec, MovementEvent, Trajectory, parse_grid_id

EDGE_HEADER = ("src", "dst", "weight_events", "weight_agents")
NODE_HEADER = ("loc", "visitors", "events", "self_transitions", "degree")


class UnknownNodeError(KeyError):
    pass


class Unreachable:
    """Result of a distance query between disconnected nodes."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNREACHABLE"

    def __bool__(self):
        return False


UNREACHABLE = Unreachable()


@dataclass
class NodeStats:
    visitors: int = 0
    events: int = 0
    self_transitions: int = 0


@dataclass
class EdgeStats:
    weight_events: int = 0
    weight_agents: int = 0


@dataclass
class MobilityNetwork:
    """Directed (or undirected) weighted location graph.

    Undirected edges are keyed by the lexicographically ordered pair.
    Self-transitions are stored on nodes and never become edges.
    """

    directed: bool = True
    nodes: dict[str, NodeStats] = field(default_factory=dict)
    edges: dict[tuple[str, str], EdgeStats] = field(default_factory=dict)
    _adjacency: dict[str, set[str]] | None = field(default=None, repr=False, compare=False)

    def key(self, a: str, b: str) -> tuple[str, str]:
        if self.directed or a <= b:
            return a, b
        return b, a

    @property
    def adjacency(self) -> dict[str, set[str]]:
        """Neighbour sets of the undirected projection."""
        if self._adjacency is None:
            adj: dict[str, set[str]] = {n: set() for n in self.nodes}
            for a, b in self.edges:
                adj.setdefault(a, set()).add(b)
                adj.setdefault(b, set()).add(a)
            self._adjacency = adj
        return self._adjacency

    def degree(self, node: str) -> int:
        return len(self.adjacency.get(node, ()))

    def degrees(self) -> dict[str, int]:
        adj = self.adjacency
        return {n: len(adj.get(n, ())) for n in self.nodes}

    @property
    def total_transitions(self) -> int:
        return (sum(e.weight_events for e in self.edges.values())
                + sum(n.self_transitions for n in self.nodes.values()))


def build_network(trajs: Mapping[str, Trajectory], directed: bool = True) -> MobilityNetwork:
    net = MobilityNetwork(directed=directed)
    nodes = net.nodes
    edges = net.edges
    for traj in trajs.values():
        locs = traj.locations
        for loc in set(locs):
            node = nodes.get(loc)
            if node is None:
                node = nodes[loc] = NodeStats()
            node.visitors += 1
        for loc in locs:
            nodes[loc].events += 1
        seen: set[tuple[str, str]] = set()
        prev = locs[0]
        for cur in locs[1:]:
            if cur == prev:
                nodes[cur].self_transitions += 1
            else:
                k = net.key(prev, cur)
                e = edges.get(k)
                if e is None:
                    e = edges[k] = EdgeStats()
                e.weight_events += 1
                if k not in seen:
                    seen.add(k)
                    e.weight_agents += 1
            prev = cur
    return net


def bfs_distances(net: MobilityNetwork, source: str) -> dict[str, int]:
    if source not in net.nodes:
        raise UnknownNodeError(source)
    adj = net.adjacency
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = du
                queue.append(v)
    return dist


def shortest_path_distance(net: MobilityNetwork, a: str, b: str) -> int | Unreachable:
    """Hop count on the undirected projection, or ``UNREACHABLE``."""
    for n in (a, b):
        if n not in net.nodes:
            raise UnknownNodeError(n)
    if a == b:
        return 0
    if b in net.adjacency.get(a, ()):
        return 1
    return bfs_distances(net, a).get(b, UNREACHABLE)


def contract_jump_distances(trajs: Mapping[str, Trajectory],
                            net: MobilityNetwork) -> dict[int | str, int]:
    """Histogram of network distances between consecutive locations.

    Unreachable pairs are tallied under the key ``"unreachable"``.
    """
    hist: dict[int | str, int] = {}
    cache: dict[str, dict[str, int]] = {}
    adj = net.adjacency
    for traj in trajs.values():
        locs = traj.locations
        for a, b in zip(locs, locs[1:]):
            if a == b:
                d: int | str = 0
            elif b in adj.get(a, ()):
                d = 1
            else:
                if a not in cache:
                    cache[a] = bfs_distances(net, a)
                d = cache[a].get(b, "unreachable")
            hist[d] = hist.get(d, 0) + 1
    return hist


def randomize_trajectories(trajs: Mapping[str, Trajectory], world: Sequence[str],
                           seed: int) -> dict[str, Trajectory]:
    """Replace every location with an i.i.d. uniform draw from ``world``.

    Event counts and timestamps are kept per agent; distinct-location
    counts are preserved only in expectation.
    """
    if not world:
        raise ValueError("empty location universe")
    rng = random.Random(seed)
    out = {}
    for agent, traj in trajs.items():
        events = tuple(MovementEvent(agent, ev.t, world[rng.randrange(len(world))])
                       for ev in traj.events)
        out[agent] = Trajectory(agent, events)
    return out


def visitor_counts(trajs: Iterable[Trajectory]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for traj in trajs:
        for loc in set(traj.locations):
            counts[loc] = counts.get(loc, 0) + 1
    return counts


MOORE = tuple((dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0))
VON_NEUMANN = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass
class NeighborhoodResult:
    rows: list[tuple[str, int, float]]
    omitted: int


def neighborhood_visitor_average(trajs: Mapping[str, Trajectory], grid: GridSpec,
                                 connectivity: int = 8) -> NeighborhoodResult:
    """Pair each visited land's visitor count with its neighbours' mean.

    Only neighbours inside ``grid`` with at least one visitor contribute.
    Lands with no visited neighbour are omitted and counted.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    offsets = MOORE if connectivity == 8 else VON_NEUMANN
    visitors = visitor_counts(trajs.values())
    by_xy = {parse_grid_id(loc, grid): n for loc, n in visitors.items()}
    rows = []
    omitted = 0
    for loc in sorted(visitors):
        x, y = parse_grid_id(loc, grid)
        neigh = [by_xy[(x + dx, y + dy)] for dx, dy in offsets if (x + dx, y + dy) in by_xy]
        if not neigh:
            omitted += 1
            continue
        rows.append((loc, visitors[loc], sum(neigh) / len(neigh)))
    return NeighborhoodResult(rows, omitted)
