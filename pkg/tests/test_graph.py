"""Graph construction, queries, and half-trek reachability."""

import random

import pytest

from latentid.catalog import builtin_graph
from latentid.graph import (
    EdgeIntoLatentError,
    LatentFactorGraph,
    NamespaceError,
    SelfLoopError,
    UnknownNodeError,
    children,
    descendants,
    graph_from_dict,
    graph_to_dict,
    htr,
    parents_lat,
    parents_obs,
    to_dot,
)

from oracles import htr_bruteforce, random_latent_factor_graph, reach_by_matrix_power


@pytest.fixture
def fig2a():
    return builtin_graph("fig2a")


@pytest.fixture
def fig2b():
    return builtin_graph("fig2b")


class TestConstruction:
    def test_self_loop_rejected(self):
        with pytest.raises(SelfLoopError):
            LatentFactorGraph(["1", "2"], ["h1"], [("1", "1")], [])

    def test_edge_into_latent_rejected(self):
        with pytest.raises(EdgeIntoLatentError):
            LatentFactorGraph(["1", "2"], ["h1"], [], [("h1", "h1")])
        with pytest.raises(EdgeIntoLatentError):
            LatentFactorGraph(
                ["1", "2"], ["h1"], [("1", "h1")], [("h1", "2")]
            )

    def test_namespace_overlap_rejected(self):
        with pytest.raises(NamespaceError):
            LatentFactorGraph(["1", "x"], ["x"], [], [])

    def test_unknown_node_rejected(self):
        with pytest.raises(UnknownNodeError):
            LatentFactorGraph(["1", "2"], [], [("1", "3")], [])

    def test_reciprocal_pair_and_cycle_allowed(self):
        g = LatentFactorGraph(
            ["1", "2"], ["h1"], [("1", "2"), ("2", "1")], [("h1", "1")]
        )
        assert g.edges_obs == frozenset({("1", "2"), ("2", "1")})

    def test_dict_round_trip(self, fig2a):
        assert graph_from_dict(graph_to_dict(fig2a)) == fig2a


class TestQueries:
    def test_parents_obs_fig2a(self, fig2a):
        assert parents_obs(fig2a, "5") == frozenset({"1", "4"})

    def test_parents_obs_empty(self, fig2a):
        assert parents_obs(fig2a, "1") == frozenset()

    def test_parents_obs_household(self):
        g = builtin_graph("household")
        assert parents_obs(g, "TC") == frozenset({"HS", "HA", "TA"})

    def test_parents_lat_fig2a(self, fig2a):
        assert parents_lat(fig2a, "3") == frozenset({"h1"})

    def test_parents_lat_no_latent_edges(self):
        g = LatentFactorGraph(["1", "2"], [], [("1", "2")], [])
        assert parents_lat(g, "1") == frozenset()

    def test_parents_lat_overlap_pattern(self):
        g = LatentFactorGraph(
            ["4"], ["h1", "h2"], [], [("h1", "4"), ("h2", "4")]
        )
        assert parents_lat(g, "4") == frozenset({"h1", "h2"})

    def test_children_latent(self, fig2a):
        assert children(fig2a, {"h1"}) == frozenset(
            {"1", "2", "3", "4", "5", "6"}
        )

    def test_children_empty(self, fig2a):
        assert children(fig2a, set()) == frozenset()

    def test_children_fig2b(self, fig2b):
        assert children(fig2b, {"4"}) == frozenset({"3"})

    def test_descendants_chain(self, fig2a):
        assert descendants(fig2a, {"4"}) == frozenset({"5", "6"})

    def test_descendants_sink(self, fig2a):
        assert descendants(fig2a, {"6"}) == frozenset()

    def test_descendants_cycle(self):
        g = LatentFactorGraph(["1", "2"], [], [("1", "2"), ("2", "1")], [])
        assert descendants(g, {"1"}) == frozenset({"1", "2"})

    def test_unknown_node_query(self, fig2a):
        with pytest.raises(UnknownNodeError):
            parents_obs(fig2a, "99")


class TestHtr:
    def test_htr_avoiding_latent(self, fig2a):
        result = htr(fig2a, {"3"}, {"h1"})
        assert result == frozenset({"4", "5", "6"})
        assert "2" not in result

    def test_htr_without_avoiding(self, fig2a):
        assert htr(fig2a, {"3"}, frozenset()) == frozenset(
            {"1", "2", "4", "5", "6"}
        )

    def test_htr_isolated_node(self):
        g = LatentFactorGraph(["1", "2"], [], [], [])
        assert htr(g, {"1"}, frozenset()) == frozenset()

    def test_htr_rejects_observed_avoid(self, fig2a):
        with pytest.raises(UnknownNodeError):
            htr(fig2a, {"3"}, {"1"})

    def test_htr_source_never_member_even_on_cycle(self):
        g = LatentFactorGraph(
            ["1", "2"], ["h1"], [("1", "2"), ("2", "1")], [("h1", "1")]
        )
        assert "1" not in htr(g, {"1"}, frozenset())

    def test_htr_matches_bruteforce_random(self):
        rng = random.Random(7)
        for _ in range(60):
            g = random_latent_factor_graph(rng, max_obs=6, acyclic=False)
            for s in g.observed:
                for avoid in (frozenset(), frozenset(g.latent)):
                    assert htr(g, {s}, avoid) == htr_bruteforce(
                        g, {s}, avoid
                    ), (g, s, avoid)

    def test_htr_monotone_in_avoid_set(self):
        rng = random.Random(11)
        for _ in range(40):
            g = random_latent_factor_graph(rng, max_obs=6, max_lat=2)
            lats = sorted(g.latent)
            small = frozenset(lats[:1])
            for s in g.observed:
                assert htr(g, {s}, frozenset(lats)) <= htr(g, {s}, small)
                assert htr(g, {s}, small) <= htr(g, {s}, frozenset())

    def test_descendants_match_matrix_powers(self):
        rng = random.Random(13)
        for _ in range(40):
            g = random_latent_factor_graph(rng, max_obs=8, acyclic=False)
            for s in g.observed:
                assert descendants(g, {s}) == reach_by_matrix_power(g, s)


def test_to_dot_mentions_all_nodes(fig2a):
    dot = to_dot(fig2a)
    for n in list(fig2a.observed) + list(fig2a.latent):
        assert n in dot
