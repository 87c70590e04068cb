"""Synthetic graphs so that every check runs without downloads."""

import networkx as nx
import numpy as np

from .graph import Graph

MODELS = ("er", "rr", "ba", "path", "cycle", "star", "complete")


def from_networkx(nxg) -> Graph:
    nxg = nx.convert_node_labels_to_integers(nxg, ordering="sorted")
    edges = np.array(list(nxg.edges()), dtype=np.int64).reshape(-1, 2)
    return Graph.from_edges(nxg.number_of_nodes(), edges)


def to_networkx(g: Graph):
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.num_nodes))
    nxg.add_edges_from(g.edges().tolist())
    return nxg


def erdos_renyi(n: int, p: float, seed: int = 0) -> Graph:
    return from_networkx(nx.gnp_random_graph(n, p, seed=seed))


def random_regular(n: int, d: int, seed: int = 0) -> Graph:
    return from_networkx(nx.random_regular_graph(d, n, seed=seed))


def barabasi_albert(n: int, m: int, seed: int = 0) -> Graph:
    return from_networkx(nx.barabasi_albert_graph(n, m, seed=seed))


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(leaves: int) -> Graph:
    """Center is node 0."""
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def generate(model: str, n: int, p: float = 0.05, d: int = 6, m: int = 5, seed: int = 0) -> Graph:
    if model == "er":
        return erdos_renyi(n, p, seed)
    if model == "rr":
        return random_regular(n, d, seed)
    if model == "ba":
        return barabasi_albert(n, m, seed)
    if model == "path":
        return path_graph(n)
    if model == "cycle":
        return cycle_graph(n)
    if model == "star":
        return star_graph(n - 1)
    if model == "complete":
        return complete_graph(n)
    raise ValueError(f"unknown graph model {model!r}; choose from {', '.join(MODELS)}")
