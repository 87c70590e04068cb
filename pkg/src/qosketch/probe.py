"""Monte-Carlo check of the expected inner product of random 1-layer GCN/SAGE outputs.

With i.i.d. zero-mean node inputs (std sigma_node) and weights (std
sigma_weight), the closed forms for a non-adjacent pair are

    GCN:  C / sqrt(d^_u d^_v) * sum_{k in N_u & N_v} 1 / d^_k
    SAGE: C / sqrt(d_u d_v) * CN(u, v)

with d^ = d + 1 and C = sigma_node^2 sigma_weight^2 F F'. The SAGE layer
here averages over neighbors (no self term), which gives
C * CN / (d_u d_v) instead; the report carries both numbers so the gap is
visible rather than hidden.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .oracles import common_neighbors

KINDS = ("gcn", "sage")


@dataclass(frozen=True)
class ProbeConfig:
    F: int = 64
    F_prime: int = 64
    sigma_node: float = 1.0
    sigma_weight: float = 1.0
    trials: int = 10_000
    kind: str = "gcn"
    seed: int = 0

    def __post_init__(self):
        if min(self.F, self.F_prime) < 1 or min(self.sigma_node, self.sigma_weight) <= 0:
            raise ValueError("probe dimensions and standard deviations must be positive")
        if self.trials < 100:
            raise ValueError("trials must be >= 100")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    @property
    def C(self) -> float:
        return self.sigma_node**2 * self.sigma_weight**2 * self.F * self.F_prime


@dataclass
class ProbeResult:
    pair: tuple
    kind: str
    empirical: float
    closed_form: float
    z: float
    std_error: float
    mean_aggregation_form: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pair"] = list(self.pair)
        return d


def propagation_matrix(g: Graph, kind: str) -> sp.csr_matrix:
    """Row-normalized aggregation operator P such that a layer is (P X) W^T."""
    a = g.csr()
    d = g.degrees.astype(np.float64)
    if kind == "gcn":
        dhat = d + 1.0
        s = sp.diags(1.0 / np.sqrt(dhat))
        return sp.csr_matrix(s @ (a + sp.identity(g.num_nodes, format="csr")) @ s)
    if kind == "sage":
        inv = np.zeros_like(d)
        np.divide(1.0, d, out=inv, where=d > 0)
        return sp.csr_matrix(sp.diags(inv) @ a)
    raise ValueError(f"kind must be one of {KINDS}")


def _layer(g: Graph, X, W, kind: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.shape[0] != g.num_nodes:
        raise ValueError(f"X has {X.shape[0]} rows for a {g.num_nodes}-node graph")
    if W.ndim != 2 or W.shape[1] != X.shape[1]:
        raise ValueError(f"W of shape {W.shape} cannot map {X.shape[1]}-dim inputs")
    return (propagation_matrix(g, kind) @ X) @ W.T


def gcn_layer(g: Graph, X, W) -> np.ndarray:
    """h_u = W sum_{k in N(u) + u} X_k / sqrt(d^_k d^_u)."""
    return _layer(g, X, W, "gcn")


def sage_layer(g: Graph, X, W) -> np.ndarray:
    """h_u = W mean_{k in N(u)} X_k; isolated nodes map to zero."""
    return _layer(g, X, W, "sage")


def closed_form(g: Graph, u: int, v: int, cfg: ProbeConfig) -> float:
    cn = common_neighbors(g, u, v)
    d = g.degrees
    if cfg.kind == "gcn":
        dh = d + 1.0
        return cfg.C / math.sqrt(dh[u] * dh[v]) * float(np.sum(1.0 / dh[cn]))
    if cn.size == 0:
        return 0.0
    return cfg.C / math.sqrt(d[u] * d[v]) * cn.size


def mean_aggregation_form(g: Graph, u: int, v: int, cfg: ProbeConfig) -> float:
    """Expectation actually implied by the mean-aggregating SAGE layer."""
    cn = common_neighbors(g, u, v).size
    if cn == 0:
        return 0.0
    return float(cfg.C * cn / (g.degrees[u] * g.degrees[v]))


def sample_inner_products(g: Graph, u: int, v: int, cfg: ProbeConfig, batch: int = 500) -> np.ndarray:
    """h_u . h_v for ``cfg.trials`` independent (X, W) draws.

    Only the rows of X that reach u or v are drawn; rows elsewhere cannot
    change either output. Trial batches have their own generators spawned
    from ``(cfg.seed, u, v)``.
    """
    P = propagation_matrix(g, cfg.kind)
    support = np.union1d(P[u].indices, P[v].indices)
    pu = P[u].toarray().ravel()[support]
    pv = P[v].toarray().ravel()[support]
    kind_id = KINDS.index(cfg.kind)
    root = np.random.SeedSequence([cfg.seed, kind_id, int(u), int(v)])
    n_batches = -(-cfg.trials // batch)
    out = []
    for i, child in enumerate(root.spawn(n_batches)):
        rng = np.random.default_rng(child)
        t = min(batch, cfg.trials - i * batch)
        X = rng.normal(0.0, cfg.sigma_node, size=(t, support.size, cfg.F))
        W = rng.normal(0.0, cfg.sigma_weight, size=(t, cfg.F_prime, cfg.F))
        au = np.einsum("k,tkf->tf", pu, X)
        av = np.einsum("k,tkf->tf", pv, X)
        hu = np.einsum("tgf,tf->tg", W, au)
        hv = np.einsum("tgf,tf->tg", W, av)
        out.append(np.sum(hu * hv, axis=1))
    return np.concatenate(out)


def probe_expectation(cfg: ProbeConfig, g: Graph, u: int, v: int) -> ProbeResult:
    if u == v or g.has_edge(u, v):
        raise ValueError(f"({u}, {v}) must be a distinct non-adjacent pair")
    samples = sample_inner_products(g, u, v, cfg)
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(samples.size))
    cf = closed_form(g, u, v, cfg)
    diff = abs(mean - cf)
    z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
    return ProbeResult(
        pair=(int(u), int(v)),
        kind=cfg.kind,
        empirical=mean,
        closed_form=cf,
        z=z,
        std_error=se,
        mean_aggregation_form=mean_aggregation_form(g, u, v, cfg) if cfg.kind == "sage" else None,
    )
