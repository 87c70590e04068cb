"""Ranking metrics, estimator accuracy sweeps and repeated-split benchmarks."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracles
from .graph import Graph, hop_neighborhoods, load_edge_list, split_edges
from .sketch import SketchConfig, de_feature_matrix, feature_layout, propagate_hops, sample_signatures

MODELS = ("cn", "aa", "ra", "mlp")


def hits_at_k(pos_scores, neg_scores, k: int = 50) -> float:
    """Share of positives scoring strictly above the k-th best negative."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("hits_at_k needs non-empty score arrays")
    if k < 1 or k > neg.size:
        raise ValueError(f"k={k} is outside 1..{neg.size} negatives")
    kth = np.partition(neg, neg.size - k)[neg.size - k]
    return float(np.mean(pos > kth))


def mrr(pos_scores, neg_scores) -> float:
    """Mean reciprocal rank; row i of ``neg_scores`` holds positive i's candidates.

    A 1-d ``neg_scores`` is treated as one shared candidate set.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64)
    if neg.ndim == 1:
        neg = np.broadcast_to(neg, (pos.size, neg.size))
    if pos.size == 0 or neg.shape[0] != pos.size or neg.shape[1] == 0:
        raise ValueError("every positive needs a non-empty candidate set")
    rank = 1 + np.sum(neg >= pos[:, None], axis=1)
    return float(np.mean(1.0 / rank))


# --------------------------------------------------------------------------
# Estimator accuracy


def exact_de_matrix(g: Graph, pairs, r: int, layout=None) -> np.ndarray:
    """Exact #(p, q) for every pair, columns in ``layout`` order."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    layout = feature_layout(r) if layout is None else layout
    hops = hop_neighborhoods(g, r, nodes=np.unique(pairs))
    out = np.zeros((len(pairs), len(layout)))
    for i, (u, v) in enumerate(pairs):
        for j, (p, q) in enumerate(layout):
            out[i, j] = oracles.exact_de_count(g, hops, u, v, p, q)
    return out


def sample_pairs(g: Graph, count: int, seed: int = 0) -> np.ndarray:
    """Distinct unordered node pairs drawn uniformly (adjacent or not)."""
    rng = np.random.default_rng(seed)
    n = g.num_nodes
    if n < 2:
        raise ValueError("need at least two nodes")
    count = min(count, n * (n - 1) // 2)
    seen, out = set(), []
    while len(out) < count:
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return np.array(out, dtype=np.int64)


def estimation_benchmark(g: Graph, dims=(256, 512, 1024, 2048), pairs=None, hubs=(0,), r: int = 2,
                         seeds=range(5), num_pairs: int = 500, pair_seed: int = 0) -> list[dict]:
    """MSE of every #(p, q) estimate against the exact count, per (F, b).

    MSE is averaged over ``pairs`` and signature ``seeds``; ``seconds`` is
    the mean wall time of one sketch (sampling, propagation, estimation).
    """
    pairs = sample_pairs(g, num_pairs, pair_seed) if pairs is None else np.asarray(pairs, dtype=np.int64)
    layout = feature_layout(r)
    exact = exact_de_matrix(g, pairs, r, layout)
    hops = hop_neighborhoods(g, r, nodes=np.unique(pairs))
    report = []
    for F in dims:
        for b in hubs:
            sq = np.zeros(len(layout))
            elapsed = 0.0
            seeds = list(seeds)
            for seed in seeds:
                t0 = time.perf_counter()
                cfg = SketchConfig(dim=F, hubs=b, hops=r, seed=seed)
                prop = propagate_hops(sample_signatures(cfg, g), hops)
                est = de_feature_matrix(prop, hops, pairs, layout)
                elapsed += time.perf_counter() - t0
                sq += np.mean((est - exact) ** 2, axis=0)
            for j, (p, q) in enumerate(layout):
                report.append({
                    "F": F, "b": b, "p": p, "q": q,
                    "mse": float(sq[j] / len(seeds)),
                    "seconds": elapsed / len(seeds),
                })
    return report


def mse_lookup(report, F, b, p, q) -> float:
    for row in report:
        if (row["F"], row["b"], row["p"], row["q"]) == (F, b, p, q):
            return row["mse"]
    raise KeyError((F, b, p, q))


# --------------------------------------------------------------------------
# Link-prediction benchmark


def heuristic_scores(g: Graph, pairs, kind: str) -> np.ndarray:
    """CN / AA / RA scores for many pairs at once via sparse row products."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    a = g.csr()
    d = g.degrees.astype(np.float64)
    if kind == "cn":
        w = np.ones_like(d)
    elif kind == "ra":
        w = np.divide(1.0, d, out=np.zeros_like(d), where=d > 0)
    elif kind == "aa":
        w = np.zeros_like(d)
        ok = d > 1
        w[ok] = 1.0 / np.log(d[ok])
    else:
        raise ValueError(f"unknown heuristic {kind!r}")
    if not len(pairs):
        return np.zeros(0)
    left = a[pairs[:, 0]].multiply(w[None, :])
    return np.asarray(left.multiply(a[pairs[:, 1]]).sum(axis=1)).ravel()


@dataclass
class BenchmarkSummary:
    dataset: str
    model: str
    metric: str
    mean: float
    std: float
    config_hash: str
    values: list

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "metric": self.metric,
            "mean": self.mean,
            "std": self.std,
            "config_hash": self.config_hash,
            "values": self.values,
        }


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_benchmark(dataset, model: str = "cn", repeats: int = 10, k: int = 50, seed: int = 0,
                  train_cfg=None, out_dir=None, name: str | None = None, threads: int = 1) -> BenchmarkSummary:
    """Test Hits@k over ``repeats`` random 70-10-20 splits (split seeds seed..seed+repeats-1).

    ``dataset`` is an edge-list path or a Graph. With ``out_dir`` a CSV with
    one row per repeat and a JSON summary are written there. Repeats run on
    ``threads`` workers; results are collected in repeat order.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    if isinstance(dataset, Graph):
        g = dataset
        name = name or "graph"
    else:
        path = Path(dataset)
        if not path.is_file():
            raise FileNotFoundError(f"dataset not found; expected an edge list at {path.resolve()}")
        g, _ = load_edge_list(path)
        name = name or path.stem
    if model == "mlp":
        from .predictor import TrainConfig, evaluate, train

        train_cfg = train_cfg or TrainConfig()

    def one(i):
        split = split_edges(g, seed=seed + i)
        if model == "mlp":
            cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": train_cfg.seed + i})
            params, _ = train(None, split, cfg)
            return evaluate(params, split, cfg, k=k)[f"hits@{k}"]
        obs = split.observed_graph()
        pos = heuristic_scores(obs, split.test_pos, model)
        neg = heuristic_scores(obs, split.test_neg, model)
        return hits_at_k(pos, neg, min(k, len(neg)))

    if threads > 1 and repeats > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = [float(v) for v in pool.map(one, range(repeats))]
    else:
        values = [float(one(i)) for i in range(repeats)]
    cfg_doc = {"dataset": name, "model": model, "repeats": repeats, "k": k, "seed": seed,
               "train": train_cfg.to_dict() if model == "mlp" else None}
    summary = BenchmarkSummary(
        dataset=name,
        model=model,
        metric=f"hits@{k}",
        mean=float(np.mean(values)),
        std=float(np.std(values)) if len(values) > 1 else 0.0,
        config_hash=config_hash(cfg_doc),
        values=values,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{name}_{model}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["repeat", "split_seed", summary.metric])
            for i, v in enumerate(values):
                w.writerow([i, seed + i, repr(v)])
        (out / f"{name}_{model}.json").write_text(json.dumps(summary.to_dict(), indent=1, sort_keys=True) + "\n")
    return summary
