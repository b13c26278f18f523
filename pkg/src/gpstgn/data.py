"""Series/adjacency I/O, chronological splits, z-score normalization, windowing
and the synthetic corpus generator."""

from __future__ import annotations

from dataclasses import dataclass
import math
from pathlib import Path
import warnings

import numpy as np

from .errors import ConfigError, DataError, GraphMismatchError, ParseError
from .graph import WeightedGraph

INTERVAL_PREFIX = "# interval_minutes="
DEFAULT_INTERVAL = 5.0


@dataclass(frozen=True)
class TrafficSeries:
    """``T x N`` matrix of readings, one column per sensor."""

    values: np.ndarray
    interval_minutes: float = DEFAULT_INTERVAL
    sensor_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"series must be a non-empty T x N matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("series contains NaN or Inf")
        if not self.interval_minutes > 0:
            raise DataError(f"interval must be positive, got {self.interval_minutes}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        ids = self.sensor_ids
        if ids is None:
            ids = tuple(str(i) for i in range(v.shape[1]))
        ids = tuple(str(s) for s in ids)
        if len(ids) != v.shape[1]:
            raise DataError(f"{len(ids)} sensor ids for {v.shape[1]} columns")
        if len(set(ids)) != len(ids):
            raise DataError("sensor ids must be unique")
        object.__setattr__(self, "sensor_ids", ids)
        object.__setattr__(self, "interval_minutes", float(self.interval_minutes))

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "TrafficSeries":
        return TrafficSeries(self.values[start:stop], self.interval_minutes, self.sensor_ids)

    def with_values(self, values: np.ndarray) -> "TrafficSeries":
        return TrafficSeries(values, self.interval_minutes, self.sensor_ids)


# -- file formats ------------------------------------------------------------


def _parse_row(line: str, path, row: int, width: int | None) -> list[float]:
    cells = line.split(",")
    if width is not None and len(cells) != width:
        raise ParseError(f"expected {width} values, found {len(cells)}", path, row)
    out = []
    for col, cell in enumerate(cells, start=1):
        try:
            val = float(cell)
        except ValueError:
            raise ParseError(f"non-numeric value {cell.strip()!r}", path, row, col) from None
        if not math.isfinite(val):
            raise ParseError(f"non-finite value {cell.strip()!r}", path, row, col)
        out.append(val)
    return out


def load_series(path, interval_minutes: float | None = None) -> TrafficSeries:
    """Read a series file; an explicit ``interval_minutes`` overrides the file's."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    pos = 0
    file_interval = None
    if lines and lines[0].startswith(INTERVAL_PREFIX):
        try:
            file_interval = float(lines[0][len(INTERVAL_PREFIX):])
        except ValueError:
            raise ParseError("bad interval metadata line", path, 1) from None
        pos = 1
    if pos >= len(lines):
        raise ParseError("missing sensor header", path, pos + 1)
    ids = tuple(s.strip() for s in lines[pos].split(","))
    rows = []
    for lineno, line in enumerate(lines[pos + 1:], start=pos + 2):
        if not line.strip():
            continue
        rows.append(_parse_row(line, path, lineno, len(ids)))
    if not rows:
        raise ParseError("no data rows", path)
    interval = interval_minutes if interval_minutes is not None else file_interval
    return TrafficSeries(np.array(rows), interval if interval is not None else DEFAULT_INTERVAL, ids)


def save_series(path, series: TrafficSeries) -> None:
    lines = [f"{INTERVAL_PREFIX}{series.interval_minutes!r}", ",".join(series.sensor_ids)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in series.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_adjacency(path) -> WeightedGraph:
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty adjacency file", path)
    ids = tuple(s.strip() for s in lines[0].split(","))
    n = len(ids)
    rows = [_parse_row(line, path, i, n) for i, line in enumerate(lines[1:], start=2)]
    if len(rows) != n:
        raise ParseError(f"adjacency is not square: {n} ids but {len(rows)} rows", path)
    a = np.array(rows)
    if np.any(a < 0):
        r, c = np.argwhere(a < 0)[0]
        raise ParseError("negative edge weight", path, int(r) + 2, int(c) + 1)
    asym = np.max(np.abs(a - a.T))
    if asym > 1e-9:
        raise DataError(f"{path}: adjacency is asymmetric (max difference {asym:g})")
    a = (a + a.T) / 2.0
    np.fill_diagonal(a, 0.0)
    return WeightedGraph(a, ids)


def save_adjacency(path, graph: WeightedGraph) -> None:
    ids = graph.sensor_ids or tuple(str(i) for i in range(graph.n))
    lines = [",".join(ids)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in graph.adjacency)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def check_alignment(series: TrafficSeries, graph: WeightedGraph) -> None:
    if series.n != graph.n:
        raise GraphMismatchError(f"series has {series.n} sensors but graph has {graph.n} nodes")
    if graph.sensor_ids is not None and tuple(graph.sensor_ids) != tuple(series.sensor_ids):
        raise GraphMismatchError("series header and adjacency sensor ids differ")


# -- splitting and normalization ---------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.15
    test: float = 0.15

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(f <= 0 for f in fr):
            raise ConfigError(f"split fractions must all be positive, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fr)!r}")


def split_bounds(t: int, spec: SplitSpec = SplitSpec()) -> tuple[int, int]:
    # the epsilon keeps e.g. 100 * 0.85 from flooring to 84
    b1 = math.floor(t * spec.train + 1e-9)
    b2 = math.floor(t * (spec.train + spec.val) + 1e-9)
    return b1, b2


def split(series: TrafficSeries, spec: SplitSpec = SplitSpec()):
    """Chronological train/val/test split; boundaries at ``floor(T * cumfrac)``."""
    b1, b2 = split_bounds(series.t, spec)
    if b1 < 1 or b2 - b1 < 1 or series.t - b2 < 1:
        raise DataError(f"series of {series.t} steps is too short to split {spec}")
    return series.rows(0, b1), series.rows(b1, b2), series.rows(b2, series.t)


@dataclass(frozen=True)
class NormStats:
    """Population mean/std, global scalars or per-node vectors."""

    mean: np.ndarray
    std: np.ndarray
    mode: str = "global"

    def __post_init__(self):
        if self.mode not in ("global", "per_node"):
            raise ConfigError(f"unknown normalization mode {self.mode!r}")
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if np.any(std <= 0):
            raise DataError("normalization std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def _check(self, n: int) -> None:
        if self.mode == "per_node" and self.mean.shape != (n,):
            raise GraphMismatchError(f"per-node stats for {self.mean.shape[0]} nodes applied to {n}")

    def apply(self, values: np.ndarray) -> np.ndarray:
        self._check(values.shape[-1])
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        self._check(values.shape[-1])
        return values * self.std + self.mean


def fit_norm(train: TrafficSeries, mode: str = "global") -> NormStats:
    v = train.values
    if mode == "global":
        mean, std = v.mean(), v.std()
        if std <= 0:
            raise DataError("training data has zero variance; cannot normalize")
    elif mode == "per_node":
        mean, std = v.mean(axis=0), v.std(axis=0)
        if np.any(std <= 0):
            bad = [train.sensor_ids[i] for i in np.flatnonzero(std <= 0)]
            raise DataError(f"zero training variance for sensors {bad}")
    else:
        raise ConfigError(f"unknown normalization mode {mode!r}")
    return NormStats(mean, std, mode)


def normalize(series: TrafficSeries, stats: NormStats) -> TrafficSeries:
    return series.with_values(stats.apply(series.values))


def reduce(series: TrafficSeries, stats: NormStats) -> TrafficSeries:
    """Reductor: map normalized values back to traffic units."""
    return series.with_values(stats.invert(series.values))


# -- windowing ---------------------------------------------------------------


@dataclass(frozen=True)
class WindowedSample:
    x: np.ndarray
    y: np.ndarray


class WindowSet:
    """All sliding windows of a series, stored as stacked arrays.

    ``x`` is ``S x his x N`` and ``y`` is ``S x N``; indexing yields
    :class:`WindowedSample` objects in start order.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.x.shape[0] != self.y.shape[0]:
            raise DataError("window inputs and targets differ in count")

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i) -> WindowedSample:
        return WindowedSample(self.x[i], self.y[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, idx) -> "WindowSet":
        return WindowSet(self.x[idx], self.y[idx])

    @property
    def n(self) -> int:
        return self.x.shape[2]


def window_count(t: int, his: int, pred: int) -> int:
    return max(0, t - his - pred + 1)


def window(series: TrafficSeries | np.ndarray, his: int, pred: int, strict: bool = False) -> WindowSet:
    """Inputs ``rows[s, s+his)`` and target ``row s+his+pred-1`` for every start ``s``."""
    if his < 1 or pred < 1:
        raise ConfigError(f"his and pred must be >= 1, got {his}, {pred}")
    v = series.values if isinstance(series, TrafficSeries) else np.asarray(series, dtype=np.float64)
    t, n = v.shape
    count = window_count(t, his, pred)
    if count == 0:
        msg = f"series of {t} steps yields no windows for his={his}, pred={pred}"
        if strict:
            raise DataError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return WindowSet(np.zeros((0, his, n)), np.zeros((0, n)))
    x = np.stack([v[s:s + his] for s in range(count)])
    y = v[his + pred - 1: his + pred - 1 + count].copy()
    return WindowSet(x, y)


def horizon_steps(minutes: float, interval_minutes: float) -> int:
    """Convert a horizon in minutes to a whole number of steps."""
    steps = minutes / interval_minutes
    rounded = round(steps)
    if rounded < 1 or abs(steps - rounded) > 1e-9:
        rem = math.fmod(minutes, interval_minutes)
        raise ConfigError(
            f"horizon of {minutes:g} min is not a positive multiple of the {interval_minutes:g} min "
            f"interval (remainder {rem:g} min)"
        )
    return int(rounded)


# -- synthetic corpus --------------------------------------------------------

DAY_STEPS = 288


def synth_generate(
    n_nodes: int,
    t_steps: int,
    seed: int,
    noise: float = 0.1,
    interval_minutes: float = DEFAULT_INTERVAL,
    level: float = 50.0,
    amplitude: float = 10.0,
):
    """Random geometric sensor graph plus coupled daily sinusoids.

    Points are uniform in the unit square; ``w = exp(-d^2 / 0.1)`` kept where
    ``w >= 0.5``. Each node carries ``sin(2 pi t / 288 + phase)`` plus 0.3 times
    the weighted neighbour mean of those sinusoids plus Gaussian noise, scaled
    to ``level + amplitude * signal``.
    """
    if n_nodes < 2:
        raise ConfigError("synthetic graph needs at least 2 nodes")
    if t_steps < 1:
        raise ConfigError("synthetic series needs at least 1 step")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n_nodes, 2))
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    w = np.exp(-d2 / 0.1)
    w[w < 0.5] = 0.0
    np.fill_diagonal(w, 0.0)
    w = (w + w.T) / 2.0
    ids = tuple(f"s{i:03d}" for i in range(n_nodes))
    graph = WeightedGraph(w, ids)

    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_nodes)
    steps = np.arange(t_steps)[:, None]
    base = np.sin(2.0 * np.pi * steps / DAY_STEPS + phase[None, :])
    deg = w.sum(axis=1)
    mix = np.divide(w, deg[:, None], out=np.zeros_like(w), where=deg[:, None] > 0)
    signal = base + 0.3 * base @ mix.T
    if noise > 0:
        signal = signal + rng.normal(0.0, noise, size=signal.shape)
    series = TrafficSeries(level + amplitude * signal, interval_minutes, ids)
    return graph, series
