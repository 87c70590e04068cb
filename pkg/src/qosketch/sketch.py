"""Quasi-orthogonal node signatures and the structural-feature estimators.

Every node gets a random unit-norm signature drawn from the vertices of a
scaled hypercube (or a reserved one-hot coordinate if it is a hub). Summing
signatures over neighborhoods and taking inner products yields unbiased
estimates of common-neighbor counts, distance-encoding label counts
#(p, q), walk counts and per-node triangle counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .graph import Graph, HopNeighborhoods, hop_neighborhoods

RESCALE_MODES = ("none", "fixed_fn", "learned")
DISTRIBUTIONS = ("hypercube", "gaussian")
MAX_HOPS = 3


class SketchConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SketchConfig:
    dim: int = 1024
    hubs: int = 0
    hops: int = 2
    seed: int = 0
    rescale: str = "none"
    # gaussian only exists to exercise the F * Var(x^2) * CN variance term
    distribution: str = "hypercube"

    def __post_init__(self):
        if self.dim < 1:
            raise SketchConfigError("dim must be >= 1")
        if not 0 <= self.hubs < self.dim:
            raise SketchConfigError(f"hubs must satisfy 0 <= hubs < dim, got hubs={self.hubs}, dim={self.dim}")
        if not 1 <= self.hops <= MAX_HOPS:
            raise SketchConfigError(f"hops must be in 1..{MAX_HOPS}")
        if self.rescale not in RESCALE_MODES:
            raise SketchConfigError(f"rescale must be one of {RESCALE_MODES}")
        if self.distribution not in DISTRIBUTIONS:
            raise SketchConfigError(f"distribution must be one of {DISTRIBUTIONS}")

    def with_seed(self, seed: int) -> "SketchConfig":
        return replace(self, seed=seed)


@dataclass
class SignatureMatrix:
    values: np.ndarray  # (num_nodes, dim)
    stage: str = "initial"
    hub_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class PropagatedSignatures:
    """Walk stages h^(0..L) over all nodes and/or hop stages eta^(1..r).

    Hop stages cover only ``hop_nodes`` (row i belongs to ``hop_nodes[i]``).
    """

    walk: list = field(default_factory=list)
    hop: dict = field(default_factory=dict)
    hop_nodes: np.ndarray | None = None

    def walk_rows(self, l: int, nodes) -> np.ndarray:
        if l >= len(self.walk):
            raise ValueError(f"walk stage {l} not computed (have 0..{len(self.walk) - 1})")
        return self.walk[l][nodes]


@dataclass
class StructuralFeature:
    counts: dict
    triangles: tuple | None = None

    def vector(self, layout) -> np.ndarray:
        return np.array([self.counts[pq] for pq in layout])


def feature_layout(r: int) -> list[tuple[int, int]]:
    """Ordered (p, q) keys: for s = 1..r, (s,s), (s,t), (t,s) for t > s, then (s,0), (0,s).

    For r = 2 this is (1,1) (1,2) (2,1) (1,0) (0,1) (2,2) (2,0) (0,2).
    """
    out = []
    for s in range(1, r + 1):
        out.append((s, s))
        for t in range(s + 1, r + 1):
            out += [(s, t), (t, s)]
        out += [(s, 0), (0, s)]
    return out


def rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise inner products with a fixed summation order."""
    return np.sum(a * b, axis=-1)


# --------------------------------------------------------------------------
# Signatures


def hub_nodes(g: Graph, b: int) -> np.ndarray:
    """Top-``b`` nodes by degree, ties to the smaller id."""
    if b == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(g.num_nodes), -g.degrees))
    return order[:b].astype(np.int64)


def sample_signatures(cfg: SketchConfig, g: Graph) -> SignatureMatrix:
    """Draw one signature per node.

    Non-hubs get i.i.d. entries in {-1, +1} / sqrt(F - b) on the first F - b
    coordinates; hub number i (by degree rank) gets a 1 at coordinate
    F - b + i. Entries depend only on (seed, node id, coordinate).
    """
    n, F, b = g.num_nodes, cfg.dim, cfg.hubs
    if b > n:
        raise SketchConfigError(f"hubs={b} exceeds num_nodes={n}")
    width = F - b
    ids = np.arange(n, dtype=np.int64)
    if cfg.distribution == "hypercube":
        body = rng.random_signs(cfg.seed, ids, width) / math.sqrt(width)
    else:
        body = rng.random_normal(cfg.seed, ids, width) / math.sqrt(width)
    x = np.zeros((n, F))
    x[:, :width] = body
    hubs = hub_nodes(g, b)
    x[hubs] = 0.0
    x[hubs, width + np.arange(b)] = 1.0
    return SignatureMatrix(values=x, stage="initial", hub_nodes=hubs)


def degree_weights(g: Graph, kind: str) -> np.ndarray:
    """Fixed per-node norm weights whose squares turn counts into heuristics.

    ``"ra"`` gives 1/sqrt(d) and ``"aa"`` gives 1/sqrt(log d). Isolated nodes
    get weight 0, and so do degree-1 nodes under AA, where log d = 0.
    """
    d = g.degrees.astype(np.float64)
    w = np.zeros_like(d)
    if kind == "one":
        return np.ones_like(d)
    if kind == "ra":
        np.divide(1.0, np.sqrt(d), out=w, where=d > 0)
    elif kind == "aa":
        ok = d > 1
        w[ok] = 1.0 / np.sqrt(np.log(d[ok]))
    else:
        raise ValueError(f"unknown weight kind {kind!r}")
    return w


def rescale_norms(sig: SignatureMatrix, weights) -> SignatureMatrix:
    """Scale row k by ``weights[k]``; hub rows are scaled like any other."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (sig.values.shape[0],):
        raise ValueError(f"expected {sig.values.shape[0]} weights, got shape {w.shape}")
    if np.isnan(w).any():
        raise ValueError("NaN norm weight")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError("norm weights must be finite and non-negative")
    return SignatureMatrix(values=sig.values * w[:, None], stage="rescaled", hub_nodes=sig.hub_nodes)


# --------------------------------------------------------------------------
# Propagation


def propagate_walk(sig: SignatureMatrix, g: Graph, steps: int) -> PropagatedSignatures:
    """h^(l+1)_v = sum of h^(l) over the neighbors of v, for l < steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    adj = g.csr()
    stages = [sig.values]
    for _ in range(steps):
        stages.append(adj @ stages[-1])
    return PropagatedSignatures(walk=stages)


def propagate_hops(sig: SignatureMatrix, hops: HopNeighborhoods, s_max: int | None = None) -> PropagatedSignatures:
    """eta^(s)_v = sum of signatures over nodes at distance exactly s from v."""
    s_max = hops.r if s_max is None else s_max
    if s_max > hops.r:
        raise ValueError(f"hop {s_max} requested but neighborhoods only reach {hops.r}")
    eta = {s: hops.level(s) @ sig.values for s in range(1, s_max + 1)}
    return PropagatedSignatures(hop=eta, hop_nodes=hops.nodes)


# --------------------------------------------------------------------------
# Estimators


def estimate_cn(h_u: np.ndarray, h_v: np.ndarray) -> float:
    """Inner product of two one-step walk signatures: unbiased for CN(u, v)."""
    h_u = np.asarray(h_u)
    h_v = np.asarray(h_v)
    if h_u.shape != h_v.shape:
        raise ValueError(f"signature dimension mismatch: {h_u.shape} vs {h_v.shape}")
    return float(rowdot(h_u, h_v))


def de_feature_matrix(prop: PropagatedSignatures, hops: HopNeighborhoods, pairs, layout=None) -> np.ndarray:
    """Estimated #(p, q) for many pairs, one row per pair in ``layout`` order.

    Zero-distance entries subtract the estimated counts from |N^q|:
    #(0, q) = |N_v^q| - sum_s #(s, q), and symmetrically for q = 0.
    """
    r = hops.r
    layout = feature_layout(r) if layout is None else layout
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    iu = hops.row_of(pairs[:, 0])
    iv = hops.row_of(pairs[:, 1])
    inner = {}
    for p in range(1, r + 1):
        eu = prop.hop[p][iu]
        for q in range(1, r + 1):
            inner[p, q] = rowdot(eu, prop.hop[q][iv])
    out = np.empty((pairs.shape[0], len(layout)))
    for j, (p, q) in enumerate(layout):
        if p and q:
            out[:, j] = inner[p, q]
        elif p == 0:
            out[:, j] = hops.sizes(q)[iv] - sum(inner[s, q] for s in range(1, r + 1))
        else:
            out[:, j] = hops.sizes(p)[iu] - sum(inner[p, s] for s in range(1, r + 1))
    return out


def estimate_de_counts(prop: PropagatedSignatures, hops: HopNeighborhoods, u: int, v: int) -> StructuralFeature:
    if u == v:
        raise ValueError("label counts need two distinct endpoints")
    layout = feature_layout(hops.r)
    row = de_feature_matrix(prop, hops, [(u, v)], layout)[0]
    return StructuralFeature(counts={pq: float(x) for pq, x in zip(layout, row)})


def estimate_walk_features(walk_prop: PropagatedSignatures, u, v, p: int, q: int):
    """h_u^(p) . h_v^(q); unbiased for sum_k walks^p(k,u) walks^q(k,v).

    ``u`` and ``v`` may be scalars or equal-length index arrays.
    """
    val = rowdot(walk_prop.walk_rows(p, u), walk_prop.walk_rows(q, v))
    return float(val) if np.ndim(val) == 0 else val


def estimate_triangles(walk_prop: PropagatedSignatures, u):
    """Half of h_u^(1) . h_u^(2); unbiased for the triangles through u."""
    val = 0.5 * rowdot(walk_prop.walk_rows(1, u), walk_prop.walk_rows(2, u))
    return float(val) if np.ndim(val) == 0 else val


def predicted_variance(du: float, dv: float, cn: float, F: int, var_x2: float = 0.0) -> float:
    """Variance of the one-step CN estimator for i.i.d. zero-mean entries of variance 1/F."""
    if F < 1:
        raise ValueError("F must be >= 1")
    return (du * dv + cn * cn - 2.0 * cn) / F + F * var_x2 * cn


# --------------------------------------------------------------------------
# Convenience pipeline


def sketch_pairs(g: Graph, cfg: SketchConfig, pairs, weights=None, with_triangles: bool = False):
    """Label-count features for ``pairs`` on ``g``; returns ``(matrix, layout)``.

    Only the endpoints' neighborhoods are expanded. With ``with_triangles``
    two columns (triangles at u, triangles at v) are appended.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    sig = sample_signatures(cfg, g)
    if weights is not None:
        sig = rescale_norms(sig, weights)
    hops = hop_neighborhoods(g, cfg.hops, nodes=np.unique(pairs))
    prop = propagate_hops(sig, hops)
    layout = feature_layout(cfg.hops)
    feats = de_feature_matrix(prop, hops, pairs, layout)
    if with_triangles:
        walk = propagate_walk(sig, g, 2)
        tri = np.stack(
            [estimate_triangles(walk, pairs[:, 0]), estimate_triangles(walk, pairs[:, 1])], axis=1
        )
        feats = np.concatenate([feats, tri], axis=1)
        layout = layout + ["tri_u", "tri_v"]
    return feats, layout
