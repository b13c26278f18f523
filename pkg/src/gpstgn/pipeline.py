"""End-to-end preparation: prune, split, normalize, window, build the graph basis."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import Checkpoint, from_params
from .data import (
    NormStats,
    SplitSpec,
    TrafficSeries,
    WindowSet,
    check_alignment,
    fit_norm,
    normalize,
    split,
    window,
)
from .errors import DataError
from .graph import WeightedGraph, graph_basis
from .model import STGCN, ModelConfig, init_params
from .pruning import PruneConfig, PruneResult, apply_node_mask, prune
from .training import TrainConfig, train


@dataclass
class Prepared:
    graph: WeightedGraph
    series: TrafficSeries
    stats: NormStats
    basis: np.ndarray
    train: WindowSet
    val: WindowSet
    test: WindowSet
    raw_test: WindowSet
    his: int
    pred: int
    kept: tuple[int, ...] | None = None
    prune_result: PruneResult | None = None


def _windows(part: TrafficSeries, his: int, pred: int, label: str) -> WindowSet:
    ws = window(part, his, pred)
    if len(ws) == 0:
        raise DataError(f"{label} split has {part.t} steps, too few for his={his} + pred={pred}")
    return ws


def prepare(
    series: TrafficSeries,
    graph: WeightedGraph,
    his: int,
    pred: int,
    *,
    split_spec: SplitSpec = SplitSpec(),
    prune_cfg: PruneConfig | None = None,
    kept=None,
    norm_mode: str = "global",
    stats: NormStats | None = None,
    ks: int = 3,
    laplacian_mode: str = "power_iteration",
) -> Prepared:
    """Turn raw files into normalized train/val/test windows.

    Pruning scores use the training rows only. ``kept`` reuses an earlier
    node mask instead of re-pruning; ``stats`` reuses fitted statistics.
    """
    check_alignment(series, graph)
    b_train, _, _ = split(series, split_spec)
    result = None
    if kept is None and prune_cfg is not None:
        result = prune(graph, b_train, prune_cfg)
        kept = result.kept
        graph = result.pruned_graph
    elif kept is not None:
        kept = tuple(int(i) for i in kept)
        sub = graph.subgraph(kept).adjacency.copy()
        if prune_cfg is not None:
            sub[sub < prune_cfg.edge_threshold] = 0.0
        graph = WeightedGraph(sub, None if graph.sensor_ids is None else tuple(graph.sensor_ids[i] for i in kept))
    if kept is not None:
        series = apply_node_mask(series, kept)

    tr, va, te = split(series, split_spec)
    if stats is None:
        stats = fit_norm(tr, norm_mode)
    train_ws = _windows(normalize(tr, stats), his, pred, "train")
    val_ws = _windows(normalize(va, stats), his, pred, "validation")
    test_ws = _windows(normalize(te, stats), his, pred, "test")
    raw_test = _windows(te, his, pred, "test")
    basis = graph_basis(graph, ks, laplacian_mode)
    return Prepared(graph, series, stats, basis, train_ws, val_ws, test_ws, raw_test, his, pred,
                    None if kept is None else tuple(kept), result)


def fit_stgcn(prep: Prepared, model_cfg: ModelConfig, train_cfg: TrainConfig = TrainConfig(),
              init: dict | None = None, metadata: dict | None = None):
    """Train an STGCN on prepared data; returns (checkpoint, report, model)."""
    if model_cfg.his != prep.his:
        model_cfg = replace(model_cfg, his=prep.his)
    model = STGCN(model_cfg, prep.basis)
    params = init if init is not None else init_params(model_cfg, train_cfg.seed)
    best, report = train(model.forward, params, prep.train, prep.val, train_cfg)
    meta = {
        "pred_steps": str(prep.pred),
        "seed": str(train_cfg.seed),
        "epochs": str(len(report.epochs)),
        "best_epoch": str(report.best_epoch),
        "train_windows": str(len(prep.train)),
        "nodes": str(prep.graph.n),
    }
    if prep.kept is not None:
        meta["kept"] = " ".join(str(i) for i in prep.kept)
    meta.update(metadata or {})
    return from_params(model_cfg, best, prep.stats, meta), report, model


def checkpoint_kept(ckpt: Checkpoint):
    raw = ckpt.metadata.get("kept")
    return None if raw is None else tuple(int(s) for s in raw.split())
