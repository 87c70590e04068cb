"""Exact reference values for everything the sketch estimates.

These are deliberately direct (set intersections, dense matrix powers) and
meant for small graphs only.
"""

import logging
import math

import numpy as np

from .graph import Graph, HopNeighborhoods

logger = logging.getLogger(__name__)

MAX_MATRIX_POWER_NODES = 500


def common_neighbors(g: Graph, u: int, v: int) -> np.ndarray:
    return np.intersect1d(g.adjacency(u), g.adjacency(v), assume_unique=True)


def exact_cn(g: Graph, u: int, v: int) -> int:
    return int(common_neighbors(g, u, v).size)


def exact_aa(g: Graph, u: int, v: int) -> float:
    """Adamic-Adar; a common neighbor of degree 1 has no defined term and is skipped."""
    total = 0.0
    for k in common_neighbors(g, u, v):
        d = int(g.degrees[k])
        if d <= 1:
            logger.warning("Adamic-Adar: skipping common neighbor %d of degree %d", k, d)
            continue
        total += 1.0 / math.log(d)
    return total


def exact_ra(g: Graph, u: int, v: int) -> float:
    return float(sum(1.0 / g.degrees[k] for k in common_neighbors(g, u, v)))


def exact_de_count(g: Graph, hops: HopNeighborhoods, u: int, v: int, p: int, q: int) -> int:
    """|{k : SPD(u,k) = p and SPD(v,k) = q}| with r-truncated zero rows.

    For ``p = 0`` this is |N_v^q| minus the nodes of N_v^q within 1..r of
    ``u``, i.e. the node ``u`` itself when SPD(u,v) = q plus every node of
    N_v^q farther than r from ``u``. ``q = 0`` is symmetric.
    """
    r = hops.r
    if not (0 <= p <= r and 0 <= q <= r):
        raise ValueError(f"(p, q) = ({p}, {q}) outside 0..{r}")
    if p == 0 and q == 0:
        raise ValueError("(0, 0) is not a label count")
    if p == 0:
        nq = hops.neighbors(v, q)
        near = sum(np.intersect1d(hops.neighbors(u, s), nq).size for s in range(1, r + 1))
        return int(nq.size - near)
    if q == 0:
        npp = hops.neighbors(u, p)
        near = sum(np.intersect1d(npp, hops.neighbors(v, s)).size for s in range(1, r + 1))
        return int(npp.size - near)
    return int(np.intersect1d(hops.neighbors(u, p), hops.neighbors(v, q)).size)


def _check_size(g: Graph):
    if g.num_nodes > MAX_MATRIX_POWER_NODES:
        raise ValueError(
            f"matrix-power oracle is capped at {MAX_MATRIX_POWER_NODES} nodes, got {g.num_nodes}"
        )


def adjacency_power(g: Graph, l: int) -> np.ndarray:
    """Dense integer A^l with an overflow check."""
    _check_size(g)
    a = g.dense().astype(np.int64)
    out = np.eye(g.num_nodes, dtype=np.int64)
    for step in range(l):
        # a 0/1 right factor bounds every entry of the product by the row sum
        if out.size and out.sum(axis=1, dtype=np.float64).max() >= 2.0**62:
            raise OverflowError(f"walk counts overflow int64 at length {step + 1}")
        out = out @ a
    return out


def exact_walk_count(g: Graph, l: int, u: int, v: int) -> int:
    """Number of length-``l`` walks between ``u`` and ``v``."""
    if l < 0:
        raise ValueError("walk length must be >= 0")
    return int(adjacency_power(g, l)[u, v])


def exact_walk_product(g: Graph, u: int, v: int, p: int, q: int) -> int:
    """sum_k |walks^p(k,u)| |walks^q(k,v)|, which equals (A^(p+q))_{uv}."""
    ap = adjacency_power(g, p)
    aq = adjacency_power(g, q)
    return int(ap[:, u] @ aq[:, v])


def exact_triangles_at(g: Graph, u: int) -> int:
    """Triangles through ``u`` by enumerating edges among its neighbors."""
    nbrs = g.adjacency(u)
    count = 0
    for i, a in enumerate(nbrs):
        count += np.intersect1d(g.adjacency(a), nbrs[i + 1:], assume_unique=True).size
    return int(count)


def exact_triangles(g: Graph) -> np.ndarray:
    """Per-node triangle counts, (A^3)_{uu} / 2 via sparse products."""
    a = g.csr()
    a2 = a @ a
    return np.asarray(a2.multiply(a).sum(axis=1)).ravel().astype(np.int64) // 2


def mean_baseline(train_values) -> float:
    """Mean of training targets: the non-informative regression baseline."""
    vals = np.asarray(train_values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("mean_baseline needs at least one value")
    return float(vals.mean())
