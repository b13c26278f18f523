"""Graph pruning processor: correlation/entropy analysis and degree-based node pruning."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .data import TrafficSeries
from .errors import ConfigError, DataError, GraphMismatchError
from .graph import WeightedGraph


@dataclass(frozen=True)
class PruneConfig:
    edge_threshold: float = 0.1
    keep_fraction: float = 0.9
    alpha: float = 0.7
    entropy_bins: int = 16

    def __post_init__(self):
        if not 0.0 <= self.edge_threshold < 1.0:
            raise ConfigError(f"edge_threshold must be in [0, 1), got {self.edge_threshold}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if int(self.entropy_bins) != self.entropy_bins or self.entropy_bins < 2:
            raise ConfigError(f"entropy_bins must be an integer >= 2, got {self.entropy_bins}")


@dataclass(frozen=True)
class NodeScore:
    index: int
    weighted_degree: float
    entropy: float
    combined: float


@dataclass(frozen=True)
class PruneResult:
    kept: tuple[int, ...]
    dropped: tuple[int, ...]
    pruned_graph: WeightedGraph
    scores: tuple[NodeScore, ...]


def correlation_adjacency(series: TrafficSeries) -> np.ndarray:
    """Absolute Pearson correlation between sensor columns, zero diagonal.

    Constant columns correlate 0 with everything.
    """
    v = series.values
    if v.shape[0] < 2:
        raise DataError("correlation needs at least 2 time steps")
    centered = v - v.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    live = norms > 0
    unit = np.zeros_like(centered)
    unit[:, live] = centered[:, live] / norms[live]
    corr = np.abs(unit.T @ unit)
    corr = np.clip((corr + corr.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(corr, 0.0)
    return corr


def node_entropy(column, bins: int) -> float:
    """Shannon entropy in bits of an equal-width histogram over ``[min, max]``."""
    col = np.asarray(column, dtype=np.float64)
    lo, hi = float(col.min()), float(col.max())
    if hi == lo:
        return 0.0
    idx = np.floor((col - lo) / (hi - lo) * bins).astype(int)
    idx = np.minimum(idx, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    total = col.size
    terms = [-(c / total) * math.log2(c / total) for c in counts.tolist() if c > 0]
    return math.fsum(terms)


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def node_scores(graph: WeightedGraph, series: TrafficSeries, cfg: PruneConfig) -> tuple[NodeScore, ...]:
    degree = np.array([math.fsum(row) for row in graph.adjacency.tolist()])
    entropy = np.array([node_entropy(series.values[:, i], cfg.entropy_bins) for i in range(series.n)])
    combined = cfg.alpha * _minmax(degree) + (1.0 - cfg.alpha) * _minmax(entropy)
    return tuple(
        NodeScore(i, float(degree[i]), float(entropy[i]), float(combined[i])) for i in range(graph.n)
    )


def keep_count(n: int, keep_fraction: float) -> int:
    # half-up rounding, so 0.5 * 5 keeps 3 rather than banker's 2
    return max(1, min(n, math.floor(keep_fraction * n + 0.5)))


def prune(graph: WeightedGraph, series: TrafficSeries, cfg: PruneConfig = PruneConfig()) -> PruneResult:
    """Keep the top-scoring nodes, then zero edges lighter than the threshold.

    Ranking is by combined score descending, ties to the lower index.
    """
    if graph.n != series.n:
        raise GraphMismatchError(f"graph has {graph.n} nodes but series has {series.n} sensors")
    scores = node_scores(graph, series, cfg)
    order = sorted(range(graph.n), key=lambda i: (-scores[i].combined, i))
    k = keep_count(graph.n, cfg.keep_fraction)
    kept = tuple(sorted(order[:k]))
    dropped = tuple(sorted(order[k:]))
    sub = graph.adjacency[np.ix_(kept, kept)].copy()
    sub[sub < cfg.edge_threshold] = 0.0
    ids = None if graph.sensor_ids is None else tuple(graph.sensor_ids[i] for i in kept)
    return PruneResult(kept, dropped, WeightedGraph(sub, ids), scores)


def apply_node_mask(series: TrafficSeries, kept) -> TrafficSeries:
    kept = [int(i) for i in kept]
    if not kept:
        raise DataError("node mask is empty")
    if any(i < 0 or i >= series.n for i in kept):
        raise DataError(f"node mask index out of range for {series.n} sensors")
    if any(a >= b for a, b in zip(kept, kept[1:])):
        raise DataError("node mask indices must be strictly ascending")
    ids = tuple(series.sensor_ids[i] for i in kept)
    return TrafficSeries(series.values[:, kept], series.interval_minutes, ids)
