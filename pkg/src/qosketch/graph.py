"""Undirected simple graphs in compressed adjacency form.

Also houses edge-list ingestion, 70/10/20 link splits, exact shortest-path
neighborhoods and per-batch edge masking (shortcut removal).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


UNREACHABLE = -1


class GraphError(ValueError):
    """Raised for malformed graph input or invalid graph operations."""


class EdgeListParseError(GraphError):
    def __init__(self, path, line_no: int, line: str):
        super().__init__(f"{path}:{line_no}: expected two integer node ids, got {line!r}")
        self.line_no = line_no


class EmptyGraphError(GraphError):
    pass


class Graph:
    """Immutable undirected simple graph stored as CSR arrays.

    ``indices[indptr[v]:indptr[v+1]]`` is the ascending neighbor list of ``v``.
    """

    __slots__ = ("num_nodes", "indptr", "indices", "_csr")

    def __init__(self, num_nodes: int, indptr: np.ndarray, indices: np.ndarray):
        self.num_nodes = int(num_nodes)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self._csr = None

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "Graph":
        """Build a graph from an iterable of ``(u, v)`` pairs.

        Both orientations, duplicates and self-loops are accepted and
        canonicalized away.
        """
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= num_nodes):
            raise GraphError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        if both.size:
            both = np.unique(both, axis=0)
        counts = np.bincount(both[:, 0], minlength=num_nodes) if both.size else np.zeros(num_nodes, np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(num_nodes, indptr, both[:, 1] if both.size else np.zeros(0, np.int64))

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        return self.indices.size // 2

    def adjacency(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.adjacency(u)
        i = np.searchsorted(nbrs, v)
        return bool(i < nbrs.size and nbrs[i] == v)

    def edges(self) -> np.ndarray:
        """Undirected edge array of shape ``(m, 2)`` with ``u < v``, sorted."""
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def csr(self) -> sp.csr_matrix:
        """Adjacency matrix (float64 ones), cached."""
        if self._csr is None:
            data = np.ones(self.indices.size)
            self._csr = sp.csr_matrix(
                (data, self.indices, self.indptr), shape=(self.num_nodes, self.num_nodes)
            )
        return self._csr

    def dense(self) -> np.ndarray:
        return self.csr().toarray()

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return f"{type(self).__name__}(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


@dataclass(frozen=True)
class EdgeListReport:
    """What ``load_edge_list`` did to the raw file."""

    labels: np.ndarray  # labels[i] is the original id of dense node i
    lines_read: int
    self_loops_dropped: int
    duplicates_dropped: int


_SPLIT = {"tsv": re.compile(r"\s+"), "csv": re.compile(r"\s*,\s*")}


def load_edge_list(path, format: str | None = None) -> tuple[Graph, EdgeListReport]:
    """Read an integer edge list and canonicalize it.

    ``format`` is ``"tsv"`` (any whitespace), ``"csv"`` or ``None`` to accept
    either per line. Lines starting with ``#`` are skipped. Node ids are
    densified to ``0..n-1`` in order of first appearance.
    """
    path = Path(path)
    if format is not None and format not in _SPLIT:
        raise GraphError(f"unknown edge-list format {format!r}")
    splitter = _SPLIT[format] if format else re.compile(r"[\s,]+")

    labels: dict[int, int] = {}
    raw = []
    lines_read = 0
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = splitter.split(text)
            if len(parts) < 2:
                raise EdgeListParseError(path, line_no, text)
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListParseError(path, line_no, text) from None
            lines_read += 1
            for x in (a, b):
                if x not in labels:
                    labels[x] = len(labels)
            raw.append((labels[a], labels[b]))
    if not raw:
        raise EmptyGraphError(f"{path}: no edges found")

    e = np.asarray(raw, dtype=np.int64)
    loops = int(np.count_nonzero(e[:, 0] == e[:, 1]))
    g = Graph.from_edges(len(labels), e)
    dups = lines_read - loops - g.num_edges
    report = EdgeListReport(
        labels=np.fromiter(labels.keys(), dtype=np.int64, count=len(labels)),
        lines_read=lines_read,
        self_loops_dropped=loops,
        duplicates_dropped=dups,
    )
    return g, report


def write_edge_list(path, edges, sep: str = "\t") -> None:
    with open(path, "w") as fh:
        for u, v in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
            fh.write(f"{u}{sep}{v}\n")


def read_pairs(path) -> np.ndarray:
    """Read an integer pair file without densifying ids."""
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = re.split(r"[\s,]+", text)
            try:
                rows.append((int(parts[0]), int(parts[1])))
            except (ValueError, IndexError):
                raise EdgeListParseError(path, line_no, text) from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


# --------------------------------------------------------------------------
# Shortest-path neighborhoods


def bfs_distances(g: Graph, source: int, max_depth: int | None = None) -> np.ndarray:
    """Hop distance from ``source`` to every node; ``UNREACHABLE`` if none."""
    dist = np.full(g.num_nodes, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    depth = 0
    while frontier.size and (max_depth is None or depth < max_depth):
        depth += 1
        nbrs = np.concatenate([g.adjacency(x) for x in frontier])
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] == UNREACHABLE]
        dist[nbrs] = depth
        frontier = nbrs
    return dist


class HopNeighborhoods:
    """Exact-distance neighborhoods N_v^s for s = 1..r over a set of nodes.

    ``level(s)`` is a CSR 0/1 matrix whose row ``i`` marks the nodes at
    distance exactly ``s`` from ``nodes[i]``.
    """

    def __init__(self, r: int, num_nodes: int, nodes: np.ndarray, levels: list[sp.csr_matrix]):
        self.r = r
        self.num_nodes = num_nodes
        self.nodes = nodes
        self._levels = levels
        self._pos = np.full(num_nodes, -1, dtype=np.int64)
        self._pos[nodes] = np.arange(nodes.size)

    def row_of(self, v) -> np.ndarray:
        pos = self._pos[np.asarray(v, dtype=np.int64)]
        if np.any(pos < 0):
            raise KeyError("node outside the computed receptive field")
        return pos

    def level(self, s: int) -> sp.csr_matrix:
        if not 1 <= s <= self.r:
            raise ValueError(f"hop {s} outside 1..{self.r}")
        return self._levels[s - 1]

    def neighbors(self, v: int, s: int) -> np.ndarray:
        if s == 0:
            return np.array([v], dtype=np.int64)
        m = self.level(s)
        i = self.row_of(v)
        return m.indices[m.indptr[i]:m.indptr[i + 1]]

    def sizes(self, s: int) -> np.ndarray:
        """|N_v^s| for every covered node, aligned with ``nodes``."""
        return np.diff(self.level(s).indptr)

    def size(self, v: int, s: int) -> int:
        if s == 0:
            return 1
        m = self.level(s)
        i = self.row_of(v)
        return int(m.indptr[i + 1] - m.indptr[i])


def hop_neighborhoods(g: Graph, r: int, nodes=None) -> HopNeighborhoods:
    """Depth-``r`` truncated BFS from every node in ``nodes`` (default all)."""
    if r < 1:
        raise ValueError("r must be >= 1")
    n = g.num_nodes
    nodes = np.arange(n, dtype=np.int64) if nodes is None else np.unique(np.asarray(nodes, dtype=np.int64))
    m = nodes.size
    adj = g.csr()
    frontier = sp.csr_matrix((np.ones(m), nodes, np.arange(m + 1)), shape=(m, n))
    visited = frontier.copy()
    levels = []
    for s in range(1, r + 1):
        if s == 1:
            nxt = adj[nodes]
        else:
            nxt = frontier @ adj
            nxt.data[:] = 1.0
            nxt = nxt - nxt.multiply(visited)
            nxt.eliminate_zeros()
        nxt = sp.csr_matrix(nxt)
        nxt.sort_indices()
        nxt.indices = nxt.indices.astype(np.int64)
        nxt.indptr = nxt.indptr.astype(np.int64)
        levels.append(nxt)
        visited = visited + nxt
        frontier = nxt
    return HopNeighborhoods(r, n, nodes, levels)


# --------------------------------------------------------------------------
# Masking


@dataclass(frozen=True)
class BatchMask:
    removed_edges: np.ndarray

    @classmethod
    def of(cls, edges) -> "BatchMask":
        return cls(np.asarray(edges, dtype=np.int64).reshape(-1, 2))


class GraphView(Graph):
    """A graph with some edges hidden; the base graph is left untouched."""

    __slots__ = ("base", "mask")

    def unmask(self) -> Graph:
        return self.base


def _edge_keys(n: int, edges: np.ndarray) -> np.ndarray:
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return lo * n + hi


def masked_view(g: Graph, mask: BatchMask) -> GraphView:
    """Return ``g`` without the edges in ``mask``."""
    base = g.base if isinstance(g, GraphView) else g
    removed = mask.removed_edges.reshape(-1, 2)
    n = g.num_nodes
    if removed.size:
        for u, v in removed:
            if u == v or not (0 <= u < n and 0 <= v < n) or not g.has_edge(u, v):
                raise GraphError(f"mask edge ({u}, {v}) is not in the graph")
        src = np.repeat(np.arange(n, dtype=np.int64), g.degrees)
        keys = _edge_keys(n, np.stack([src, g.indices], axis=1))
        keep = ~np.isin(keys, _edge_keys(n, removed))
        counts = np.bincount(src[keep], minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        indices = g.indices[keep]
    else:
        indptr, indices = g.indptr, g.indices
    view = GraphView(n, indptr, indices)
    view.base = base
    view.mask = mask
    return view


# --------------------------------------------------------------------------
# Splits


@dataclass
class DatasetSplit:
    num_nodes: int
    train_pos: np.ndarray
    valid_pos: np.ndarray
    test_pos: np.ndarray
    valid_neg: np.ndarray
    test_neg: np.ndarray
    seed: int
    ratios: tuple = (0.7, 0.1, 0.2)
    include_valid: bool = False

    def observed_graph(self, include_valid: bool | None = None) -> Graph:
        """Graph visible to scoring: train edges, optionally plus validation edges."""
        inc = self.include_valid if include_valid is None else include_valid
        edges = np.concatenate([self.train_pos, self.valid_pos]) if inc else self.train_pos
        return Graph.from_edges(self.num_nodes, edges)

    def counts(self) -> dict:
        return {
            "train": len(self.train_pos),
            "valid": len(self.valid_pos),
            "test": len(self.test_pos),
            "valid_neg": len(self.valid_neg),
            "test_neg": len(self.test_neg),
        }


def sample_non_edges(num_nodes: int, count: int, forbidden_keys: np.ndarray, rng) -> np.ndarray:
    """Uniform distinct node pairs (u < v) whose keys are not forbidden."""
    max_pairs = num_nodes * (num_nodes - 1) // 2
    if count > max_pairs - np.unique(forbidden_keys).size:
        raise GraphError("not enough non-edges to sample negatives")
    taken = set(forbidden_keys.tolist())
    out = []
    while len(out) < count:
        need = count - len(out)
        cand = rng.integers(0, num_nodes, size=(2 * need + 16, 2))
        for u, v in cand:
            if u == v:
                continue
            if u > v:
                u, v = v, u
            key = int(u) * num_nodes + int(v)
            if key in taken:
                continue
            taken.add(key)
            out.append((int(u), int(v)))
            if len(out) == count:
                break
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def split_edges(g: Graph, ratios=(0.7, 0.1, 0.2), seed: int = 0, include_valid: bool = False) -> DatasetSplit:
    """Random link split; validation/test sizes are floored, the remainder trains.

    One negative per validation/test positive is drawn uniformly from node
    pairs that are not edges of ``g``.
    """
    edges = g.edges()
    m = len(edges)
    if m < 10:
        raise GraphError(f"graph too small to split ({m} edges, need >= 10)")
    if len(ratios) != 3 or not math.isclose(sum(ratios), 1.0) or min(ratios) < 0:
        raise GraphError(f"bad split ratios {ratios}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    n_valid = int(math.floor(ratios[1] * m + 1e-9))
    n_test = int(math.floor(ratios[2] * m + 1e-9))
    n_train = m - n_valid - n_test
    train = edges[np.sort(perm[:n_train])]
    valid = edges[np.sort(perm[n_train:n_train + n_valid])]
    test = edges[np.sort(perm[n_train + n_valid:])]
    forbidden = _edge_keys(g.num_nodes, edges)
    neg = sample_non_edges(g.num_nodes, n_valid + n_test, forbidden, rng)
    return DatasetSplit(
        num_nodes=g.num_nodes,
        train_pos=train,
        valid_pos=valid,
        test_pos=test,
        valid_neg=neg[:n_valid],
        test_neg=neg[n_valid:],
        seed=seed,
        ratios=tuple(ratios),
        include_valid=include_valid,
    )


_SPLIT_FILES = ("train_pos", "valid_pos", "test_pos", "valid_neg", "test_neg")


def save_split(split: DatasetSplit, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in _SPLIT_FILES:
        write_edge_list(d / f"{name}.txt", getattr(split, name))
    manifest = {
        "seed": split.seed,
        "ratios": list(split.ratios),
        "num_nodes": split.num_nodes,
        "include_valid": split.include_valid,
        "counts": split.counts(),
    }
    path = d / "split.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_split(directory) -> DatasetSplit:
    d = Path(directory)
    manifest = json.loads((d / "split.json").read_text())
    arrays = {name: read_pairs(d / f"{name}.txt") for name in _SPLIT_FILES}
    split = DatasetSplit(
        num_nodes=manifest["num_nodes"],
        seed=manifest["seed"],
        ratios=tuple(manifest["ratios"]),
        include_valid=manifest.get("include_valid", False),
        **arrays,
    )
    if split.counts() != manifest["counts"]:
        raise GraphError(f"{d}: split files disagree with manifest counts")
    return split
