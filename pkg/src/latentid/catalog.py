"""Built-in example graphs, available by name from the CLI and tests."""

from __future__ import annotations

from .graph import LatentFactorGraph


def _num_graph(n: int, edges: list[tuple[int, int]]) -> LatentFactorGraph:
    """Graph on observed nodes "1".."n" with one latent "h1" -> all."""
    observed = [str(i) for i in range(1, n + 1)]
    return LatentFactorGraph(
        observed,
        ["h1"],
        [(str(a), str(b)) for a, b in edges],
        [("h1", v) for v in observed],
    )


def chain_with_shortcut() -> LatentFactorGraph:
    """Six-node chain 1->...->6 plus the shortcut 1->5, one latent."""
    return _num_graph(6, [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (1, 5)])


def two_proxy() -> LatentFactorGraph:
    """Four observed nodes, one latent; 2->3 becomes identifiable only
    via the extended criterion with two half-trek "proxies"."""
    return _num_graph(4, [(1, 2), (2, 3), (4, 3)])


def chain_with_fork() -> LatentFactorGraph:
    """Chain 1->2->3->4->5 with the extra fork edge 4->6, one latent.

    Identifying 2->3 requires first deleting the identified edge 4->5 and
    re-running in the subgraph.
    """
    return _num_graph(6, [(1, 2), (2, 3), (3, 4), (4, 5), (4, 6)])


def household() -> LatentFactorGraph:
    """Household energy-consumption model with a socio-economic-status
    latent factor over five observed quantities."""
    observed = ["IP", "HS", "HA", "TA", "TC"]
    return LatentFactorGraph(
        observed,
        ["SES"],
        [
            ("HS", "HA"),
            ("HS", "TA"),
            ("HS", "TC"),
            ("HA", "TC"),
            ("TA", "TC"),
        ],
        [("SES", v) for v in observed],
    )


def dense_six() -> LatentFactorGraph:
    """Six observed nodes with nine edges, one latent; exercises the
    superset search over the per-z conditioning sets."""
    return _num_graph(
        6,
        [
            (1, 2),
            (1, 3),
            (3, 6),
            (4, 5),
            (5, 6),
            (1, 5),
            (2, 4),
            (4, 6),
            (2, 6),
        ],
    )


BUILTIN_GRAPHS = {
    "fig2a": chain_with_shortcut,
    "fig2b": two_proxy,
    "fig4a": chain_with_fork,
    "household": household,
    "fig3": dense_six,
}


def builtin_graph(name: str) -> LatentFactorGraph:
    try:
        return BUILTIN_GRAPHS[name]()
    except KeyError:
        raise KeyError(
            f"unknown builtin graph {name!r}; "
            f"choices: {', '.join(sorted(BUILTIN_GRAPHS))}"
        ) from None
