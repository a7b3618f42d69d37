from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metamob import analysis as A
from metamob.core import GridSpec, MovementEvent, agent_stats, canonicalize_trajectories
from metamob.fitting import DegenerateDistributionError, InsufficientDataError
from metamob.network import build_network

from conftest import trajs_of
from oracles import gini_pairwise


@pytest.mark.parametrize("g,mu", [(0.0, 1.0), (0.41, 0.709), (1.0, 0.5)])
def test_analytic_mu(g, mu):
    assert A.analytic_mu(g) == pytest.approx(mu, abs=5e-4)


def test_gini_examples():
    assert A.gini([3, 3, 3, 3]) == 0.0
    assert abs(A.gini([1, 0, 0, 0]) - 0.75) < 1e-12
    with pytest.raises(ValueError):
        A.gini([0, 0])
    with pytest.raises(ValueError):
        A.gini([])


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=30).filter(any),
       st.floats(0.01, 100))
def test_gini_properties(xs, c):
    g = A.gini(xs)
    assert g == pytest.approx(gini_pairwise(xs), abs=1e-12)
    assert A.gini([c * x for x in xs]) == pytest.approx(g, abs=1e-9)
    assert 0 <= g <= (len(xs) - 1) / len(xs) + 1e-12


def test_rank_order_and_ties():
    traj = trajs_of({"a": list("CABAABA")})["a"]
    assert A.ranked_locations(traj) == [("A", 4), ("B", 2), ("C", 1)]
    tie = trajs_of({"a": list("BAAB")})["a"]
    assert [loc for loc, _ in A.ranked_locations(tie)] == ["B", "A"]


def test_rank_frequency_fractions_and_flat_case():
    rs = A.rank_shares(trajs_of({"a": list("AAAABBC")}))
    assert list(rs.share) == pytest.approx([4 / 7, 2 / 7, 1 / 7])
    flat = A.rank_frequency(trajs_of({f"u{i}": [f"L{k}" for k in range(64)] for i in range(6)}))
    assert flat.fit.exponent == pytest.approx(0.0, abs=1e-12)


def test_rank_frequency_is_a_distribution_and_counts_exclusions():
    p = {"a": list("AAAB"), "b": list("ABCDEEEE"), "solo": list("ZZZ")}
    rs = A.rank_shares(trajs_of(p))
    assert rs.excluded == 1
    assert float(rs.share.sum()) == pytest.approx(1.0)
    assert list(rs.share) == pytest.approx([(3 / 4 + 4 / 8) / 2, (1 / 4 + 1 / 8) / 2,
                                            1 / 16, 1 / 16, 1 / 16])
    assert list(rs.reached) == [2, 2, 1, 1, 1]
    with pytest.raises(InsufficientDataError):
        A.rank_shares(trajs_of({"solo": ["A"]}))


def test_exploration_curve_limits():
    always_new = trajs_of({f"a{i}": [f"L{k}" for k in range(200)] for i in range(3)})
    assert A.exploration_curve(always_new).fit.exponent == pytest.approx(1.0, abs=1e-12)
    stuck = trajs_of({"a": ["A"] * 200})
    assert A.exploration_curve(stuck).fit.exponent == pytest.approx(0.0, abs=1e-12)


def test_fluctuation_scaling_noiseless_and_scale_covariant():
    # counts (c, 3c): mean 2c, population sd c, so sigma = f / 2
    p = {f"a{c}": ["A"] * c + ["B"] * (3 * c) for c in range(1, 12)}
    res = A.fluctuation_scaling(A.all_agent_stats(trajs_of(p)))
    assert res.fit.exponent == pytest.approx(1.0, abs=1e-12)
    p["even"] = list("AB")
    p["solo"] = ["A"]
    res = A.fluctuation_scaling(A.all_agent_stats(trajs_of(p)))
    assert (res.excluded_single, res.excluded_zero_sigma) == (1, 1)
    uneven = {f"a{i}": ["A"] * (i + 1) + ["B"] * (2 * i + 5) + ["C"] for i in range(12)}
    base = A.fluctuation_scaling(A.all_agent_stats(trajs_of(uneven))).fit.exponent
    # scaling by the bin base shifts every point by whole bins: exact
    doubled = A.fluctuation_scaling(A.all_agent_stats(trajs_of({k: v * 2 for k, v in uneven.items()})))
    assert doubled.fit.exponent == pytest.approx(base, abs=1e-12)
    # other factors move points across bin edges, so only approximately
    tripled = A.fluctuation_scaling(A.all_agent_stats(trajs_of({k: v * 3 for k, v in uneven.items()})))
    assert tripled.fit.exponent == pytest.approx(base, abs=0.01)


def test_estimate_gamma_always_exploring():
    trajs = trajs_of({f"a{i}": [f"L{k}" for k in range(60)] for i in range(4)})
    res = A.estimate_gamma(trajs)
    assert res.fit.exponent == pytest.approx(0.0, abs=1e-12)
    assert np.all(res.curve.values == 1.0)
    with pytest.raises(InsufficientDataError):
        A.estimate_gamma(trajs_of({"a": list("ABC")}))


def _two_window_trajs(rng, first, second):
    evs = [MovementEvent(f"p{i}", 0, f"L{x}") for i, x in enumerate(first)]
    evs += [MovementEvent(f"q{i}", 1, f"L{x}") for i, x in enumerate(second)]
    return canonicalize_trajectories(evs)


def test_preferential_check_controlled_generators():
    rng = np.random.default_rng(20261016)
    n_loc = 3000
    share = np.arange(1, n_loc + 1, dtype=float) ** -1.2
    share /= share.sum()
    first = rng.choice(n_loc, 200000, p=share)
    counts = np.bincount(first, minlength=n_loc)
    proportional = rng.choice(n_loc, 200000, p=counts / counts.sum())
    fit = A.preferential_check(_two_window_trajs(rng, first, proportional)).fit
    assert fit.exponent == pytest.approx(1.0, abs=0.05)
    uniform = rng.integers(0, n_loc, 200000)
    fit = A.preferential_check(_two_window_trajs(rng, first, uniform)).fit
    assert fit.exponent == pytest.approx(0.0, abs=0.05)
    with pytest.raises(InsufficientDataError):
        A.preferential_check(trajs_of({"a": ["A"]}))


def test_return_probability():
    rp = A.return_probability(trajs_of({"a": list("ABABA")}))
    assert rp.overall == 0.75
    # each tick is its own window: window d returns iff its location was seen before
    assert rp.by_window == {1: 0.0, 2: 1.0, 3: 1.0, 4: 1.0}
    assert A.return_probability(trajs_of({"a": list("ABCDE")})).overall == 0.0
    wide = A.return_probability(trajs_of({"a": list("ABABA")}), window=2)
    assert wide.by_window == {1: 1.0, 2: 1.0}
    assert wide.moves_by_window == {1: 2, 2: 1}


def test_retention_rate():
    assert A.retention_rate(trajs_of({"a": list("AABBB")})) == 0.75
    assert A.retention_rate(trajs_of({"a": list("ABAB")})) == 0.0
    with pytest.raises(InsufficientDataError):
        A.retention_rate(trajs_of({"a": ["A"]}))


@given(st.dictionaries(st.sampled_from("abc"), st.lists(st.sampled_from("XYZ"), min_size=2,
                                                        max_size=12), min_size=1))
def test_retention_plus_change_is_one(p):
    trajs = trajs_of(p)
    pairs = [(a, b) for t in trajs.values() for a, b in zip(t.locations, t.locations[1:])]
    change = sum(a != b for a, b in pairs) / len(pairs)
    assert A.retention_rate(trajs) + change == 1.0


def test_teleport_fraction():
    # jumps of 1, 2, 15 and 3
    trajs = trajs_of({"a": ["0,0", "1,0", "1,2", "16,2", "16,5"]})
    assert A.jump_lengths(trajs) == [1, 2, 15, 3]
    assert A.teleport_fraction(trajs, GridSpec()) == 0.25
    assert A.teleport_fraction(trajs_of({"a": ["0,0", "3,4"]})) == 0.0


def test_top_share():
    p = {f"v{i}": ["A"] for i in range(97)}
    p.update({"x": ["B"], "y": ["C"], "z": ["D"]})
    net = build_network(trajs_of(p))
    assert A.top_share(net, 0.25) == pytest.approx(0.97)
    assert A.top_share(net, 1.0) == 1.0
    shares = [A.top_share(net, f) for f in (0.01, 0.25, 0.5, 0.75, 1.0)]
    assert shares == sorted(shares)
    uniform = build_network(trajs_of({f"v{i}": [f"L{i}"] for i in range(1000)}))
    assert A.top_share(uniform, 0.01) == pytest.approx(0.01)


def test_ranked_distance():
    p = {"a": ["0,0", "0,0", "1,0"], "b": ["5,5", "5,5", "5,5", "2,5", "5,9", "5,9"],
         "solo": ["3,3"]}
    rd = A.ranked_distance(trajs_of(p), GridSpec())
    assert rd.excluded == 1
    assert rd.by_rank[2] == pytest.approx((1 + 4) / 2)
    assert rd.by_rank[3] == 3
    # both agents have 2 or 3 locations, the same base-2 stratum
    assert rd.by_S == {2: {2: 2.5, 3: 3.0}}


def test_degree_visitor_star():
    leaves = {"L1": 3, "L2": 5, "L3": 2}
    p = {}
    for leaf, n in leaves.items():
        for k in range(n):
            p[f"{leaf}_{k}"] = ["HUB", leaf]
    net = build_network(trajs_of(p))
    assert net.nodes["HUB"].visitors == sum(leaves.values())
    assert net.degree("HUB") == 3


def test_visitor_distribution_degenerate():
    net = build_network(trajs_of({f"v{i}": [f"L{i}"] for i in range(30)}))
    with pytest.raises(DegenerateDistributionError):
        A.visitor_distribution(net)


def test_visitation_gini_per_agent():
    g = A.visitation_gini(trajs_of({"a": list("AAAB"), "b": list("AB")}))
    assert g == [pytest.approx(gini_pairwise([3, 1])), 0.0]
    s = agent_stats(trajs_of({"a": list("AAAB")})["a"])
    assert A.gini(s.visit_counts.values()) == g[0]
