"""Latent-factor graphs and the purely graphical queries on them."""

from __future__ import annotations

import json
from collections import deque
from typing import Iterable

NodeSet = frozenset[str]
Edge = tuple[str, str]


class GraphError(ValueError):
    """Base class for graph construction and lookup errors."""


class SelfLoopError(GraphError):
    """An observed edge points from a node to itself."""


class EdgeIntoLatentError(GraphError):
    """An edge has a latent node as its target."""


class NamespaceError(GraphError):
    """Observed and latent node names overlap, or a name is duplicated."""


class UnknownNodeError(GraphError):
    """An edge or query refers to a node that is not in the graph."""


class LatentFactorGraph:
    """A directed graph over observed nodes and latent source nodes.

    The observed part may contain directed cycles and reciprocal edge
    pairs; latent nodes only ever appear as edge sources. Instances are
    immutable after construction and safe to share.
    """

    __slots__ = (
        "observed",
        "latent",
        "edges_obs",
        "edges_lat",
        "_children",
        "_parents_obs",
        "_parents_lat",
        "_key",
    )

    def __init__(
        self,
        observed: Iterable[str],
        latent: Iterable[str] = (),
        edges_obs: Iterable[Edge] = (),
        edges_lat: Iterable[Edge] = (),
    ):
        self.observed: tuple[str, ...] = tuple(observed)
        self.latent: tuple[str, ...] = tuple(latent)

        names = self.observed + self.latent
        if len(set(names)) != len(names):
            raise NamespaceError(
                "observed and latent node names must be distinct"
            )
        obs_set = set(self.observed)
        lat_set = set(self.latent)

        self.edges_obs: frozenset[Edge] = frozenset(
            (str(a), str(b)) for a, b in edges_obs
        )
        self.edges_lat: frozenset[Edge] = frozenset(
            (str(a), str(b)) for a, b in edges_lat
        )

        for a, b in self.edges_obs:
            if a == b:
                raise SelfLoopError(f"self-loop at node {a!r}")
            if b in lat_set or a in lat_set:
                raise EdgeIntoLatentError(
                    f"edge ({a!r}, {b!r}) touches a latent node but was "
                    "given as an observed edge"
                )
            if a not in obs_set or b not in obs_set:
                raise UnknownNodeError(f"edge ({a!r}, {b!r}) uses unknown node")
        for a, b in self.edges_lat:
            if a not in lat_set:
                raise EdgeIntoLatentError(
                    f"source {a!r} of latent edge is not a latent node"
                )
            if b in lat_set:
                raise EdgeIntoLatentError(f"edge into latent node {b!r}")
            if b not in obs_set:
                raise UnknownNodeError(f"latent edge target {b!r} unknown")

        children: dict[str, set[str]] = {n: set() for n in names}
        par_obs: dict[str, set[str]] = {n: set() for n in self.observed}
        par_lat: dict[str, set[str]] = {n: set() for n in self.observed}
        for a, b in self.edges_obs:
            children[a].add(b)
            par_obs[b].add(a)
        for a, b in self.edges_lat:
            children[a].add(b)
            par_lat[b].add(a)
        self._children = {n: frozenset(c) for n, c in children.items()}
        self._parents_obs = {n: frozenset(p) for n, p in par_obs.items()}
        self._parents_lat = {n: frozenset(p) for n, p in par_lat.items()}

        self._key = (
            self.observed,
            self.latent,
            tuple(sorted(self.edges_obs)),
            tuple(sorted(self.edges_lat)),
        )

    # -- basic protocol ---------------------------------------------------

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, LatentFactorGraph) and self._key == other._key
        )

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return (
            f"LatentFactorGraph(observed={list(self.observed)}, "
            f"latent={list(self.latent)}, "
            f"edges_obs={sorted(self.edges_obs)}, "
            f"edges_lat={sorted(self.edges_lat)})"
        )

    def _check_nodes(self, nodes: Iterable[str]) -> None:
        for n in nodes:
            if n not in self._children:
                raise UnknownNodeError(f"unknown node {n!r}")

    def is_observed(self, n: str) -> bool:
        return n in self._parents_obs

    # -- derived graphs ---------------------------------------------------

    def without_obs_edges(self, removed: Iterable[Edge]) -> "LatentFactorGraph":
        """Return a copy with the given observed edges deleted."""
        removed = set(removed)
        missing = removed - self.edges_obs
        if missing:
            raise UnknownNodeError(f"edges not in graph: {sorted(missing)}")
        return LatentFactorGraph(
            self.observed,
            self.latent,
            self.edges_obs - removed,
            self.edges_lat,
        )


def parents_obs(g: LatentFactorGraph, v: str) -> NodeSet:
    """Observed parents of the observed node `v`."""
    g._check_nodes([v])
    if not g.is_observed(v):
        raise UnknownNodeError(f"{v!r} is not an observed node")
    return g._parents_obs[v]


def parents_lat(g: LatentFactorGraph, v: str) -> NodeSet:
    """Latent parents of the observed node `v`."""
    g._check_nodes([v])
    if not g.is_observed(v):
        raise UnknownNodeError(f"{v!r} is not an observed node")
    return g._parents_lat[v]


def children(g: LatentFactorGraph, s: Iterable[str]) -> NodeSet:
    """Union of direct successors of the members of `s`."""
    s = set(s)
    g._check_nodes(s)
    out: set[str] = set()
    for n in s:
        out |= g._children[n]
    return frozenset(out)


def descendants(g: LatentFactorGraph, s: Iterable[str]) -> NodeSet:
    """All nodes reachable from `s` by a directed path of length >= 1.

    A node is a descendant of itself only if it lies on a directed cycle.
    """
    s = set(s)
    g._check_nodes(s)
    seen: set[str] = set()
    queue = deque()
    for n in sorted(s):
        for c in g._children[n]:
            if c not in seen:
                seen.add(c)
                queue.append(c)
    while queue:
        n = queue.popleft()
        for c in g._children[n]:
            if c not in seen:
                seen.add(c)
                queue.append(c)
    return frozenset(seen)


def _reach_from(g: LatentFactorGraph, start: Iterable[str]) -> set[str]:
    """Directed reachability including the start nodes themselves."""
    seen = set(start)
    queue = deque(seen)
    while queue:
        n = queue.popleft()
        for c in g._children[n]:
            if c not in seen:
                seen.add(c)
                queue.append(c)
    return seen


def htr(
    g: LatentFactorGraph,
    sources: Iterable[str],
    avoid_h: Iterable[str] = (),
) -> NodeSet:
    """Observed nodes reachable by a non-trivial half-trek from `sources`.

    A half-trek from `s` either walks forward along observed edges
    (`s -> ... -> w`) or starts with one latent top node not in `avoid_h`
    (`s <- h -> ... -> w`). The result never contains the source itself
    (per source), and results for several sources are unioned.
    """
    sources = set(sources)
    avoid_h = set(avoid_h)
    g._check_nodes(sources)
    g._check_nodes(avoid_h)
    for h in avoid_h:
        if g.is_observed(h):
            raise UnknownNodeError(f"avoid set contains observed node {h!r}")
    for s in sources:
        if not g.is_observed(s):
            raise UnknownNodeError(f"source {s!r} is not observed")

    out: set[str] = set()
    for s in sources:
        fwd = descendants(g, [s])
        over_latent = children(g, g._parents_lat[s] - avoid_h)
        reach = set(fwd) | _reach_from(g, over_latent)
        reach.discard(s)
        out |= reach
    return frozenset(out)


# -- serialization --------------------------------------------------------


def graph_from_dict(data: dict) -> LatentFactorGraph:
    """Build a graph from the JSON-schema dict representation."""
    try:
        observed = data["observed"]
        latent = data.get("latent", [])
        edges_obs = data["edges_obs"]
        edges_lat = data.get("edges_lat", [])
    except (KeyError, TypeError) as exc:
        raise GraphError(f"missing or malformed field: {exc}") from exc
    if not all(isinstance(e, (list, tuple)) and len(e) == 2 for e in edges_obs):
        raise GraphError("field 'edges_obs' must contain [from, to] pairs")
    if not all(isinstance(e, (list, tuple)) and len(e) == 2 for e in edges_lat):
        raise GraphError("field 'edges_lat' must contain [latent, to] pairs")
    return LatentFactorGraph(observed, latent, edges_obs, edges_lat)


def graph_to_dict(g: LatentFactorGraph) -> dict:
    return {
        "observed": list(g.observed),
        "latent": list(g.latent),
        "edges_obs": [list(e) for e in sorted(g.edges_obs)],
        "edges_lat": [list(e) for e in sorted(g.edges_lat)],
    }


def load_graph(path: str) -> LatentFactorGraph:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"invalid JSON in {path}: {exc}") from exc
    return graph_from_dict(data)


def to_dot(g: LatentFactorGraph) -> str:
    """Render the graph in DOT format, latent nodes drawn dashed."""
    lines = ["digraph G {"]
    for n in g.observed:
        lines.append(f'  "{n}";')
    for n in g.latent:
        lines.append(f'  "{n}" [shape=ellipse, style=dashed];')
    for a, b in sorted(g.edges_obs):
        lines.append(f'  "{a}" -> "{b}";')
    for a, b in sorted(g.edges_lat):
        lines.append(f'  "{a}" -> "{b}" [style=dashed];')
    lines.append("}")
    return "\n".join(lines)
