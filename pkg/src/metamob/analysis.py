"""Scaling laws and mobility metrics computed from trajectories and networks."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (AgentStats, FitResult, GridSpec, Quantity, Trajectory, agent_stats,
                   parse_grid_id)
from .fitting import (BinnedCurve, InsufficientDataError, binned_curve, fit_curve,
                      fit_loglog_ols, fit_powerlaw_mle, fit_powerlaw_ols, fit_profile,
                      log2_bins)
from .network import MobilityNetwork


def analytic_mu(gamma: float) -> float:
    """Exploration exponent implied by ``p_new ~ S**-gamma``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return 1.0 / (1.0 + gamma)


def gini(values: Iterable[float]) -> float:
    x = np.sort(np.asarray(list(values), dtype=float))
    if x.size == 0:
        raise ValueError("gini of an empty sequence")
    if np.any(x < 0):
        raise ValueError("gini needs non-negative values")
    total = x.sum()
    if total == 0:
        raise ValueError("gini is undefined when all values are zero")
    n = x.size
    ranks = 2 * np.arange(1, n + 1) - n - 1
    return float(ranks @ x / (n * total))


def ranked_locations(traj: Trajectory) -> list[tuple[str, int]]:
    """Locations by descending personal visits; ties go to the earlier discovery."""
    counts = Counter(traj.locations)
    first = {}
    for i, loc in enumerate(traj.locations):
        first.setdefault(loc, i)
    return sorted(counts.items(), key=lambda kv: (-kv[1], first[kv[0]]))


@dataclass
class DistributionFit:
    samples: np.ndarray
    mle: FitResult
    ols: FitResult | None = None

    @property
    def disagreement(self) -> float | None:
        return None if self.ols is None else abs(self.mle.exponent - self.ols.exponent)


def _fit_distribution(samples: Sequence[float], quantity: Quantity) -> DistributionFit:
    arr = np.asarray(samples, dtype=float)
    mle = fit_powerlaw_mle(arr, discrete=True, quantity=quantity)
    try:
        ols = fit_powerlaw_ols(arr, discrete=True, quantity=quantity)
    except InsufficientDataError:
        ols = None
    return DistributionFit(arr, mle, ols)


def visitor_distribution(net: MobilityNetwork) -> DistributionFit:
    if not net.nodes:
        raise InsufficientDataError("network has no nodes")
    return _fit_distribution([n.visitors for n in net.nodes.values()], Quantity.VISITORS)


@dataclass
class CurveFit:
    curve: BinnedCurve
    fit: FitResult
    excluded: int = 0


def exploration_curve(trajs: Mapping[str, Trajectory]) -> CurveFit:
    """Mean number of distinct locations after ``n`` moves, and its exponent.

    ``<S(n)>`` is averaged over the agents with at least ``n`` events; the
    exponent is fitted on that per-``n`` profile.
    """
    if not trajs:
        raise InsufficientDataError("no trajectories")
    longest = max(t.n for t in trajs.values())
    s_sum = np.zeros(longest)
    agents = np.zeros(longest)
    for traj in trajs.values():
        seen = set()
        s_n = np.empty(traj.n)
        for i, loc in enumerate(traj.locations):
            seen.add(loc)
            s_n[i] = len(seen)
        s_sum[:traj.n] += s_n
        agents[:traj.n] += 1
    ns = np.arange(1, longest + 1, dtype=float)
    mean_s = s_sum / agents
    curve = binned_curve(ns, mean_s, agents)
    fit = fit_profile(ns, mean_s, agents, Quantity.EXPLORATION)
    return CurveFit(curve, fit)


@dataclass
class RankShares:
    ranks: np.ndarray
    share: np.ndarray
    reached: np.ndarray
    excluded: int


def rank_shares(trajs: Mapping[str, Trajectory]) -> RankShares:
    """Average share of an agent's visits spent at its k-th ranked location.

    Shares are averaged over all agents with two or more locations, an agent
    with fewer than k locations contributing zero at rank k, so the shares
    form a probability distribution over ranks. ``reached[k]`` counts the
    agents that actually have a k-th location. Single-location agents are
    excluded and counted.
    """
    sums: dict[int, float] = {}
    agents: dict[int, int] = {}
    excluded = 0
    pooled = 0
    for traj in trajs.values():
        ranked = ranked_locations(traj)
        if len(ranked) < 2:
            excluded += 1
            continue
        pooled += 1
        n = traj.n
        for k, (_, c) in enumerate(ranked, start=1):
            sums[k] = sums.get(k, 0.0) + c / n
            agents[k] = agents.get(k, 0) + 1
    if not sums:
        raise InsufficientDataError("no agent visited two or more locations")
    ks = sorted(sums)
    return RankShares(np.array(ks, dtype=float), np.array([sums[k] / pooled for k in ks]),
                      np.array([agents[k] for k in ks], dtype=float), excluded)


def rank_frequency(trajs: Mapping[str, Trajectory]) -> CurveFit:
    """Rank-frequency curve ``P(S*)`` in base-2 rank bins and its decay exponent."""
    rs = rank_shares(trajs)
    curve = binned_curve(rs.ranks, rs.share)
    _, inv = np.unique(log2_bins(rs.ranks), return_inverse=True)
    counts = np.bincount(inv, weights=rs.reached).astype(np.int64)
    curve = BinnedCurve(curve.centers, curve.values, counts)
    fit = fit_profile(rs.ranks, rs.share, rs.reached, Quantity.RANK_FREQUENCY, negate=True)
    return CurveFit(curve, fit, rs.excluded)


@dataclass
class FluctuationResult:
    pairs: list[tuple[float, float]]
    fit: FitResult
    excluded_single: int
    excluded_zero_sigma: int


def fluctuation_scaling(stats: Iterable[AgentStats]) -> FluctuationResult:
    """``sigma_f`` against ``f_mean`` per agent, with the log-log slope.

    Agents with one location, or with perfectly even visits (``sigma_f = 0``),
    cannot enter a log fit and are counted instead.
    """
    pairs = []
    single = zero = 0
    for st in stats:
        if st.S < 2:
            single += 1
        elif st.sigma_f == 0:
            zero += 1
        else:
            pairs.append((st.f_mean, st.sigma_f))
    if len(pairs) < 3:
        raise InsufficientDataError("need at least 3 agents with uneven visits")
    return FluctuationResult(pairs, fit_loglog_ols(pairs, Quantity.FLUCTUATION), single, zero)


def estimate_gamma(trajs: Mapping[str, Trajectory], min_opportunities: int = 100) -> CurveFit:
    """Empirical exploration probability against the number of known locations.

    Every move after an agent's first event is an opportunity recorded at
    ``S`` (distinct locations seen so far); the fitted decay is ``gamma``.
    """
    trials: Counter[int] = Counter()
    news: Counter[int] = Counter()
    for traj in trajs.values():
        locs = traj.locations
        seen = {locs[0]}
        for loc in locs[1:]:
            S = len(seen)
            trials[S] += 1
            if loc not in seen:
                news[S] += 1
                seen.add(loc)
    total = sum(trials.values())
    if total < min_opportunities:
        raise InsufficientDataError(f"only {total} exploration opportunities")
    S_vals = sorted(trials)
    p = [news[s] / trials[s] for s in S_vals]
    curve = binned_curve(S_vals, p, [trials[s] for s in S_vals])
    return CurveFit(curve, fit_curve(curve, Quantity.GAMMA, negate=True))


def _window_counts(trajs: Mapping[str, Trajectory], window: int) -> dict[int, Counter[str]]:
    per: dict[int, Counter[str]] = {}
    for traj in trajs.values():
        for ev in traj.events:
            per.setdefault(ev.t // window, Counter())[ev.loc] += 1
    return per


def preferential_check(trajs: Mapping[str, Trajectory], window: int = 1) -> CurveFit:
    """Next-window arrival share against current-window popularity share.

    For every pair of consecutive windows ``(w, w+1)`` and every location
    visited in ``w``, pairs its share of the visits in ``w`` with its share
    of the moves in ``w+1`` (zero if none). The curve averages arrival share
    within base-2 bins of popularity.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    per = _window_counts(trajs, window)
    ws = sorted(per)
    if len(ws) < 2:
        raise InsufficientDataError("need at least 2 time windows")
    xs: list[float] = []
    ys: list[float] = []
    for w in ws:
        nxt = per.get(w + 1)
        if nxt is None:
            continue
        cur = per[w]
        tot_cur = sum(cur.values())
        tot_nxt = sum(nxt.values())
        for loc, c in cur.items():
            xs.append(c / tot_cur)
            ys.append(nxt.get(loc, 0) / tot_nxt)
    if not xs:
        raise InsufficientDataError("no pair of consecutive windows")
    curve = binned_curve(xs, ys)
    return CurveFit(curve, fit_curve(curve, Quantity.PREFERENTIAL))


@dataclass
class ReturnProbability:
    overall: float
    by_window: dict[int, float]
    moves_by_window: dict[int, int] = field(default_factory=dict)


def return_probability(trajs: Mapping[str, Trajectory], window: int = 1) -> ReturnProbability:
    """Share of moves that land on previously visited locations.

    ``overall`` counts every event after an agent's first against all of its
    earlier events. ``by_window[d]`` is, for the ``d``-th window after each
    agent's first active window, the share of that window's moves landing on
    locations visited in any earlier window.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    returns = moves = 0
    w_ret: Counter[int] = Counter()
    w_mov: Counter[int] = Counter()
    for traj in trajs.values():
        seen = set()
        earlier: set[str] = set()
        this_window: set[str] = set()
        w0 = traj.events[0].t // window
        cur_w = w0
        for i, ev in enumerate(traj.events):
            if i:
                moves += 1
                returns += ev.loc in seen
            seen.add(ev.loc)
            w = ev.t // window
            if w != cur_w:
                earlier |= this_window
                this_window = set()
                cur_w = w
            if w > w0:
                w_mov[w - w0] += 1
                w_ret[w - w0] += ev.loc in earlier
            this_window.add(ev.loc)
    overall = returns / moves if moves else 0.0
    by_window = {d: w_ret[d] / w_mov[d] for d in sorted(w_mov)}
    return ReturnProbability(overall, by_window, dict(sorted(w_mov.items())))


def _transitions(trajs: Mapping[str, Trajectory]):
    for traj in trajs.values():
        locs = traj.locations
        yield from zip(locs, locs[1:])


def retention_rate(trajs: Mapping[str, Trajectory]) -> float:
    """Share of consecutive event pairs that stay at the same location."""
    stay = total = 0
    for a, b in _transitions(trajs):
        total += 1
        stay += a == b
    if total == 0:
        raise InsufficientDataError("no transitions")
    return stay / total


def jump_lengths(trajs: Mapping[str, Trajectory], grid: GridSpec | None = None) -> list[int]:
    out = []
    for a, b in _transitions(trajs):
        ax, ay = parse_grid_id(a, grid)
        bx, by = parse_grid_id(b, grid)
        out.append(abs(ax - bx) + abs(ay - by))
    return out


def teleport_fraction(trajs: Mapping[str, Trajectory], grid: GridSpec | None = None,
                      threshold: int = 10) -> float:
    """Share of displacements longer than ``threshold`` (Manhattan)."""
    jumps = jump_lengths(trajs, grid)
    if not jumps:
        return 0.0
    return sum(1 for d in jumps if d > threshold) / len(jumps)


def top_share(net: MobilityNetwork, fraction: float = 0.01) -> float:
    """Share of all visitors held by the top ``ceil(fraction * nodes)`` nodes."""
    if not net.nodes:
        raise InsufficientDataError("network has no nodes")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    visitors = sorted((n.visitors for n in net.nodes.values()), reverse=True)
    k = max(1, math.ceil(fraction * len(visitors) - 1e-9))
    return sum(visitors[:k]) / sum(visitors)


@dataclass
class RankedDistance:
    curve: BinnedCurve
    by_rank: dict[int, float]
    by_S: dict[int, dict[int, float]]
    excluded: int
    fit: FitResult | None


def ranked_distance(trajs: Mapping[str, Trajectory], grid: GridSpec | None = None) -> RankedDistance:
    """Distance from each agent's top location to its k-th ranked location.

    ``by_S`` stratifies agents by the base-2 bin of their location count
    (keyed by the bin's lower edge).
    """
    ks: list[int] = []
    ds: list[int] = []
    strata: dict[int, dict[int, list[int]]] = {}
    excluded = 0
    for traj in trajs.values():
        ranked = ranked_locations(traj)
        if len(ranked) < 2:
            excluded += 1
            continue
        hx, hy = parse_grid_id(ranked[0][0], grid)
        s_bin = 1 << (len(ranked).bit_length() - 1)
        bucket = strata.setdefault(s_bin, {})
        for k, (loc, _) in enumerate(ranked[1:], start=2):
            x, y = parse_grid_id(loc, grid)
            d = abs(x - hx) + abs(y - hy)
            ks.append(k)
            ds.append(d)
            bucket.setdefault(k, []).append(d)
    by_rank_lists: dict[int, list[int]] = {}
    for k, d in zip(ks, ds):
        by_rank_lists.setdefault(k, []).append(d)
    by_rank = {k: sum(v) / len(v) for k, v in sorted(by_rank_lists.items())}
    by_S = {s: {k: sum(v) / len(v) for k, v in sorted(b.items())} for s, b in sorted(strata.items())}
    curve = binned_curve(ks, ds)
    try:
        fit = fit_curve(curve, Quantity.RANKED_DISTANCE)
    except InsufficientDataError:
        fit = None
    return RankedDistance(curve, by_rank, by_S, excluded, fit)


@dataclass
class DegreeVisitorBundle:
    degree: DistributionFit
    weight: DistributionFit
    scaling: FitResult
    isolated: int


def degree_visitor_scaling(net: MobilityNetwork, weight: str = "agents") -> DegreeVisitorBundle:
    """Degree and edge-weight distributions plus the ``N_S ~ k**beta`` slope.

    Degrees are taken on the undirected projection; nodes without any edge
    are left out of every fit and counted as ``isolated``.
    """
    if weight not in ("agents", "events"):
        raise ValueError("weight must be 'agents' or 'events'")
    if not net.nodes:
        raise InsufficientDataError("network has no nodes")
    degrees = net.degrees()
    pairs = [(k, net.nodes[n].visitors) for n, k in degrees.items() if k > 0]
    isolated = len(degrees) - len(pairs)
    attr = "weight_agents" if weight == "agents" else "weight_events"
    weights = [getattr(e, attr) for e in net.edges.values()]
    deg_fit = _fit_distribution([k for k, _ in pairs], Quantity.DEGREE)
    w_fit = _fit_distribution(weights, Quantity.WEIGHT)
    scaling = fit_loglog_ols(pairs, Quantity.DEGREE_VISITORS)
    return DegreeVisitorBundle(deg_fit, w_fit, scaling, isolated)


def all_agent_stats(trajs: Mapping[str, Trajectory]) -> list[AgentStats]:
    return [agent_stats(t) for t in trajs.values()]


def visitation_gini(trajs: Mapping[str, Trajectory]) -> list[float]:
    """Per-agent Gini of visit counts over the agent's visited locations."""
    return [gini(Counter(t.locations).values()) for t in trajs.values()]
