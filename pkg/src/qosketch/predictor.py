"""Structural-feature link classifier.

Per link, the estimated label counts #(p, q) (optionally triangle estimates
and a Hadamard block of external node features) feed a small tanh MLP
trained with binary cross-entropy. Training batches hide their own positive
links from the graph before features are computed (shortcut removal). With
``rescale="learned"`` a tiny scalar head f(log(1 + d_k)) multiplies every
signature, and its gradient is pushed back through the inner products.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .evaluation import hits_at_k, mrr
from .graph import BatchMask, DatasetSplit, Graph, hop_neighborhoods, masked_view, sample_non_edges
from .sketch import (
    SketchConfig,
    degree_weights,
    feature_layout,
    rowdot,
    sample_signatures,
)

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became NaN at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    batch_size: int = 512
    epochs: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    neg_ratio: int = 1
    seed: int = 0
    shortcut_removal: bool = True
    hidden: int = 16
    head_hidden: int = 32
    patience: int = 20
    eval_k: int = 50
    triangles: bool = False
    rescale_fn: str = "ra"
    sketch: SketchConfig = field(default_factory=SketchConfig)

    def __post_init__(self):
        if isinstance(self.sketch, dict):
            self.sketch = SketchConfig(**self.sketch)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.neg_ratio < 1:
            raise ValueError("neg_ratio must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sketch"] = asdict(self.sketch)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# Classifier


@dataclass
class MlpParams:
    """Dense tanh network ending in one logit, plus the norm-rescaling head.

    ``layers`` is a list of ``(W, b)`` with ``W`` of shape (out, in). An empty
    hidden stack is plain logistic regression. ``head`` maps log(1 + degree)
    to a per-node signature weight; it is ``None`` unless rescaling is learned.
    """

    layers: list
    head: list | None = None
    transform: str = "slog"
    layout: list = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        out = [a for wb in self.layers for a in wb]
        if self.head is not None:
            out += [a for wb in self.head for a in wb]
        return out

    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.arrays()))

    def copy(self) -> "MlpParams":
        cp = lambda ls: [(w.copy(), b.copy()) for w, b in ls]  # noqa: E731
        return MlpParams(cp(self.layers), cp(self.head) if self.head is not None else None, self.transform, list(self.layout))


def init_mlp(n_in: int, hidden: int, rng, head_hidden: int | None = None, transform: str = "slog") -> MlpParams:
    sizes = [n_in] + ([hidden] if hidden else []) + [1]
    layers = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (a + b))
        layers.append((rng.uniform(-bound, bound, size=(b, a)), np.zeros(b)))
    head = None
    if head_hidden:
        # zero output weights and unit bias: f == 1 until training moves it
        head = [
            (rng.normal(0.0, 1.0, size=(head_hidden, 1)), rng.normal(0.0, 1.0, size=head_hidden)),
            (np.zeros((1, head_hidden)), np.ones(1)),
        ]
    return MlpParams(layers, head, transform)


def _transform(x, kind):
    if kind == "slog":
        return np.sign(x) * np.log1p(np.abs(x)), 1.0 / (1.0 + np.abs(x))
    return x, np.ones_like(x)


def _forward(layers, x, transform):
    a, dtrans = _transform(np.atleast_2d(np.asarray(x, dtype=np.float64)), transform)
    acts = [a]
    for i, (W, b) in enumerate(layers):
        z = a @ W.T + b
        a = np.tanh(z) if i < len(layers) - 1 else z
        acts.append(a)
    return acts, dtrans


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def mlp_logits(params: MlpParams, x) -> np.ndarray:
    acts, _ = _forward(params.layers, x, params.transform)
    return acts[-1][:, 0]


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Link probabilities for a batch of feature rows (or a single row)."""
    return _sigmoid(mlp_logits(params, x))


def bce_loss(params: MlpParams, x, labels) -> float:
    z = mlp_logits(params, x)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    # mean of log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def mlp_backward(params: MlpParams, x, labels, input_grad: bool = False):
    """Gradients of the mean binary cross-entropy.

    Returns a list of ``(dW, db)`` aligned with ``params.layers``; with
    ``input_grad`` also the gradient with respect to the raw features.
    """
    acts, dtrans = _forward(params.layers, x, params.transform)
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    m = acts[0].shape[0]
    delta = (_sigmoid(acts[-1]) - y) / m
    grads = []
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        grads.append((delta.T @ acts[i], delta.sum(axis=0)))
        delta = delta @ W
        if i > 0:
            delta = delta * (1.0 - acts[i] ** 2)
    grads.reverse()
    if input_grad:
        return grads, delta * dtrans
    return grads


def head_forward(head, z) -> np.ndarray:
    (V1, c1), (V2, c2) = head
    return (np.tanh(np.asarray(z).reshape(-1, 1) @ V1.T + c1) @ V2.T + c2)[:, 0]


def head_backward(head, z, dw):
    """Gradients of sum_k dw_k f(z_k) with respect to the head parameters."""
    (V1, c1), (V2, _) = head
    z = np.asarray(z).reshape(-1, 1)
    a = np.tanh(z @ V1.T + c1)
    dw = np.asarray(dw).reshape(-1, 1)
    dV2 = dw.T @ a
    dc2 = dw.sum(axis=0)
    da = (dw @ V2) * (1.0 - a**2)
    return [(da.T @ z, da.sum(axis=0)), (dV2, dc2)]


def head_input(g: Graph) -> np.ndarray:
    return np.log1p(g.degrees.astype(np.float64))


# --------------------------------------------------------------------------
# Feature assembly


class LinkFeatures:
    """Features for a batch of links on one graph, with a reverse pass to node weights."""

    def __init__(self, graph: Graph, signatures: np.ndarray, pairs, r: int, weights=None,
                 triangles: bool = False, node_features=None):
        self.graph = graph
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.r = r
        self.layout = feature_layout(r)
        self.base = signatures
        self.weights = weights
        self.triangles = triangles
        x = signatures if weights is None else signatures * np.asarray(weights)[:, None]
        self.x = x
        self.hops = hop_neighborhoods(graph, r, nodes=np.unique(self.pairs)) if len(self.pairs) else None
        self.iu = self.hops.row_of(self.pairs[:, 0]) if self.hops else np.zeros(0, np.int64)
        self.iv = self.hops.row_of(self.pairs[:, 1]) if self.hops else np.zeros(0, np.int64)
        self.eta = {s: self.hops.level(s) @ x for s in range(1, r + 1)} if self.hops else {}
        self.walk = None
        if triangles:
            adj = graph.csr()
            h1 = adj @ x
            self.walk = [x, h1, adj @ h1]
        self.node_features = node_features

    def matrix(self) -> np.ndarray:
        r, iu, iv = self.r, self.iu, self.iv
        m = len(self.pairs)
        inner = {
            (p, q): rowdot(self.eta[p][iu], self.eta[q][iv]) for p in range(1, r + 1) for q in range(1, r + 1)
        } if m else {}
        cols = []
        for p, q in self.layout:
            if not m:
                cols.append(np.zeros(0))
            elif p and q:
                cols.append(inner[p, q])
            elif p == 0:
                cols.append(self.hops.sizes(q)[iv] - sum(inner[s, q] for s in range(1, r + 1)))
            else:
                cols.append(self.hops.sizes(p)[iu] - sum(inner[p, s] for s in range(1, r + 1)))
        if self.triangles:
            h1, h2 = self.walk[1], self.walk[2]
            u, v = self.pairs[:, 0], self.pairs[:, 1]
            cols.append(0.5 * (rowdot(h1[u], h2[u]) + rowdot(h1[v], h2[v])))
        out = np.stack(cols, axis=1) if cols else np.zeros((m, 0))
        if self.node_features is not None:
            nf = np.asarray(self.node_features, dtype=np.float64)
            out = np.concatenate([out, nf[self.pairs[:, 0]] * nf[self.pairs[:, 1]]], axis=1)
        if not np.all(np.isfinite(out)):
            raise ValueError("non-finite structural feature")
        return out

    def weight_gradient(self, dfeat: np.ndarray) -> np.ndarray:
        """Map d(loss)/d(features) to d(loss)/d(per-node signature weight)."""
        r, iu, iv = self.r, self.iu, self.iv
        dfeat = np.asarray(dfeat)
        col = {pq: j for j, pq in enumerate(self.layout)}
        n, F = self.x.shape
        dx = np.zeros((n, F))
        if len(self.pairs):
            rows = self.hops.nodes.size
            # zero rows subtract every #(s, q): fold them into the direct terms
            coef = {}
            for p in range(1, r + 1):
                for q in range(1, r + 1):
                    coef[p, q] = dfeat[:, col[p, q]] - dfeat[:, col[0, q]] - dfeat[:, col[p, 0]]
            for s in range(1, r + 1):
                cot = np.zeros((rows, F))
                gu = sum(coef[s, q][:, None] * self.eta[q][iv] for q in range(1, r + 1))
                gv = sum(coef[p, s][:, None] * self.eta[p][iu] for p in range(1, r + 1))
                np.add.at(cot, iu, gu)
                np.add.at(cot, iv, gv)
                dx += self.hops.level(s).T @ cot
        if self.triangles:
            j = len(self.layout)
            g = dfeat[:, j]
            adj = self.graph.csr()
            h1, h2 = self.walk[1], self.walk[2]
            d1 = np.zeros((n, F))
            d2 = np.zeros((n, F))
            for ends in (self.pairs[:, 0], self.pairs[:, 1]):
                np.add.at(d1, ends, 0.5 * g[:, None] * h2[ends])
                np.add.at(d2, ends, 0.5 * g[:, None] * h1[ends])
            d1 += adj.T @ d2
            dx += adj.T @ d1
        return np.sum(dx * self.base, axis=1)


def _weights_for(graph: Graph, cfg: TrainConfig, params: MlpParams | None):
    mode = cfg.sketch.rescale
    if mode == "none":
        return None
    if mode == "fixed_fn":
        return degree_weights(graph, cfg.rescale_fn)
    if params is None or params.head is None:
        raise ValueError("learned rescaling needs a parameter head")
    return head_forward(params.head, head_input(graph))


def assemble_features(g: Graph, split: DatasetSplit | None, batch, cfg: TrainConfig, signatures=None,
                      params: MlpParams | None = None, train: bool = False, node_features=None,
                      trace: list | None = None) -> LinkFeatures:
    """Features for ``batch`` links on graph ``g``.

    ``batch`` is an (m, 2) pair array or a dict with ``pairs`` and ``labels``.
    For training batches with shortcut removal, positive links are masked
    out of ``g`` first. ``trace`` (if given) receives a record of the graph
    actually propagated over together with the batch.
    """
    if isinstance(batch, dict):
        pairs = np.asarray(batch["pairs"], dtype=np.int64).reshape(-1, 2)
        labels = np.asarray(batch.get("labels", np.zeros(len(pairs))))
    else:
        pairs = np.asarray(batch, dtype=np.int64).reshape(-1, 2)
        labels = np.zeros(len(pairs))
    graph = g
    if train and cfg.shortcut_removal:
        pos = pairs[labels == 1]
        present = np.array([g.has_edge(u, v) for u, v in pos], dtype=bool) if len(pos) else np.zeros(0, bool)
        graph = masked_view(g, BatchMask.of(pos[present]))
    if trace is not None:
        trace.append({"graph": graph, "pairs": pairs, "labels": labels})
    if signatures is None:
        signatures = sample_signatures(cfg.sketch, g).values
    weights = _weights_for(graph, cfg, params)
    return LinkFeatures(graph, signatures, pairs, cfg.sketch.hops, weights, cfg.triangles, node_features)


# --------------------------------------------------------------------------
# Optimizer


class Adam:
    def __init__(self, arrays, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --------------------------------------------------------------------------
# Training


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    valid_hits: list = field(default_factory=list)
    best_epoch: int = -1
    best_valid_hits: float = float("-inf")


def loss_and_grads(params: MlpParams, feats: LinkFeatures, labels):
    """Mean BCE of a batch and gradients for every array in ``params.arrays()``."""
    x = feats.matrix()
    loss = bce_loss(params, x, labels)
    layer_grads, dx = mlp_backward(params, x, labels, input_grad=True)
    grads = [a for wb in layer_grads for a in wb]
    if params.head is not None:
        dw = feats.weight_gradient(dx)
        head_grads = head_backward(params.head, head_input(feats.graph), dw)
        grads += [a for wb in head_grads for a in wb]
    return loss, grads


def fit_matrix(x, labels, hidden: int = 16, epochs: int = 50, lr: float = 1e-2, seed: int = 0,
               batch_size: int | None = None):
    """Train the classifier alone on a fixed feature table; returns (params, per-epoch loss)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    rng = np.random.default_rng(seed)
    params = init_mlp(x.shape[1], hidden, rng)
    opt = Adam(params.arrays(), lr)
    bs = batch_size or len(y)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), bs):
            idx = order[start:start + bs]
            grads = mlp_backward(params, x[idx], y[idx])
            opt.step(params.arrays(), [a for wb in grads for a in wb])
        loss = bce_loss(params, x, y)
        if not math.isfinite(loss):
            raise TrainingDiverged(epoch)
        losses.append(loss)
    return params, losses


def score_pairs(params: MlpParams, g: Graph, pairs, cfg: TrainConfig, signatures=None, node_features=None) -> np.ndarray:
    feats = assemble_features(g, None, pairs, cfg, signatures=signatures, params=params, node_features=node_features)
    return mlp_forward(params, feats.matrix()) if len(feats.pairs) else np.zeros(0)


def _hits(params, g, split, cfg, sig, node_features):
    pos = score_pairs(params, g, split.valid_pos, cfg, sig, node_features)
    neg = score_pairs(params, g, split.valid_neg, cfg, sig, node_features)
    return hits_at_k(pos, neg, min(cfg.eval_k, len(neg)))


def train(g: Graph | None, split: DatasetSplit, cfg: TrainConfig, node_features=None, trace: list | None = None):
    """Fit the classifier; returns the best-validation parameters and the history.

    ``g`` is the observed graph (defaults to the split's training graph).
    """
    g = split.observed_graph() if g is None else g
    rng = np.random.default_rng(cfg.seed)
    sig = sample_signatures(cfg.sketch, g).values
    n_feat = len(feature_layout(cfg.sketch.hops)) + int(cfg.triangles)
    if node_features is not None:
        n_feat += np.asarray(node_features).shape[1]
    params = init_mlp(n_feat, cfg.hidden, rng, cfg.head_hidden if cfg.sketch.rescale == "learned" else None)
    params.layout = [list(pq) for pq in feature_layout(cfg.sketch.hops)] + (["triangles"] if cfg.triangles else [])
    opt = Adam(params.arrays(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    history = TrainHistory()
    best = params.copy()
    stale = 0
    pos_all = np.asarray(split.train_pos, dtype=np.int64)
    # negatives come from non-edges of the observed graph only; held-out links stay unseen
    observed = g.edges()
    forbidden_keys = observed[:, 0] * g.num_nodes + observed[:, 1]

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pos_all))
        negs = sample_non_edges(g.num_nodes, cfg.neg_ratio * len(pos_all), forbidden_keys, rng)
        neg_order = rng.permutation(len(negs))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            nidx = neg_order[start * cfg.neg_ratio:(start + len(idx)) * cfg.neg_ratio]
            pairs = np.concatenate([pos_all[idx], negs[nidx]])
            labels = np.concatenate([np.ones(len(idx)), np.zeros(len(nidx))])
            feats = assemble_features(g, split, {"pairs": pairs, "labels": labels}, cfg, signatures=sig,
                                      params=params, train=True, node_features=node_features, trace=trace)
            loss, grads = loss_and_grads(params, feats, labels)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            opt.step(params.arrays(), grads)
            epoch_loss += loss * len(pairs)
        history.loss.append(epoch_loss / max(1, len(pos_all) * (1 + cfg.neg_ratio)))
        if len(split.valid_pos) and len(split.valid_neg):
            vh = _hits(params, g, split, cfg, sig, node_features)
        else:
            vh = -history.loss[-1]
        history.valid_hits.append(vh)
        logger.info("epoch %d loss %.5f valid hits %.4f", epoch, history.loss[-1], vh)
        if vh > history.best_valid_hits:
            history.best_valid_hits = vh
            history.best_epoch = epoch
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, history


def evaluate(params: MlpParams, split: DatasetSplit, cfg: TrainConfig, g: Graph | None = None,
             k: int = 50, node_features=None) -> dict:
    """Test Hits@k (shared negative pool) and MRR against the same pool."""
    g = split.observed_graph() if g is None else g
    sig = sample_signatures(cfg.sketch, g).values
    pos = score_pairs(params, g, split.test_pos, cfg, sig, node_features)
    neg = score_pairs(params, g, split.test_neg, cfg, sig, node_features)
    return {
        f"hits@{k}": hits_at_k(pos, neg, k),
        "mrr": mrr(pos, np.broadcast_to(neg, (len(pos), len(neg)))),
    }


# --------------------------------------------------------------------------
# Checkpoints


def _to_lists(layers):
    return [{"W": w.tolist(), "b": b.tolist()} for w, b in layers]


def _from_lists(items):
    return [(np.asarray(it["W"], dtype=np.float64), np.asarray(it["b"], dtype=np.float64)) for it in items]


def save_checkpoint(path, params: MlpParams, cfg: TrainConfig, history: TrainHistory | None = None) -> None:
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "kind": "qosketch-link-mlp",
        "config": cfg.to_dict(),
        "transform": params.transform,
        "layout": params.layout,
        "layers": _to_lists(params.layers),
        "head": _to_lists(params.head) if params.head is not None else None,
        "num_parameters": params.num_parameters(),
    }
    if history is not None:
        doc["history"] = asdict(history)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> tuple[MlpParams, TrainConfig]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {doc.get('schema')!r}")
    params = MlpParams(
        layers=_from_lists(doc["layers"]),
        head=_from_lists(doc["head"]) if doc["head"] is not None else None,
        transform=doc["transform"],
        layout=doc["layout"],
    )
    return params, TrainConfig.from_dict(doc["config"])
