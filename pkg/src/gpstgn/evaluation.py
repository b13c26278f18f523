"""Forecast metrics, the HA and FNN baselines, and CSV report emission."""

from __future__ import annotations

import csv
from dataclasses import dataclass
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import NormStats, WindowSet
from .errors import DataError
from .model import xavier_uniform
from .training import TrainConfig, TrainReport, predict, train

MAPE_EPS = 1e-6


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    mape: float  # percent; NaN when every entry is masked
    count: int
    masked: int

    @property
    def mape_defined(self) -> bool:
        return not math.isnan(self.mape)


def metrics(pred, truth) -> MetricsReport:
    """MAE, RMSE and MAPE (percent); MAPE skips entries with ``|truth| <= 1e-6``."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=np.float64).reshape(-1)
    if p.size != t.size:
        raise DataError(f"prediction has {p.size} entries, truth has {t.size}")
    if p.size == 0:
        raise DataError("cannot score an empty prediction")
    err = p - t
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    live = np.abs(t) > MAPE_EPS
    masked = int(t.size - live.sum())
    mape = float(100.0 * np.mean(np.abs(err[live]) / np.abs(t[live]))) if live.any() else math.nan
    # Jensen: rmse >= mae, up to rounding
    assert rmse >= mae * (1 - 1e-12), (rmse, mae)
    return MetricsReport(mae, rmse, mape, int(t.size), masked)


def historical_average_forecast(window) -> np.ndarray:
    """Per-node mean of a ``his x N`` window (or a stack ``S x his x N``)."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim < 2 or w.shape[-2] == 0:
        raise DataError("historical average needs a non-empty window")
    return w.mean(axis=-2)


# -- FNN baseline ------------------------------------------------------------


class FNN:
    """One hidden ReLU layer on the flattened ``his x N`` window, linear output of size N."""

    def __init__(self, his: int, n: int, hidden: int = 64):
        self.his, self.n, self.hidden = his, n, hidden

    def init_params(self, seed: int, zero: bool = False) -> dict[str, Tensor]:
        rng = np.random.default_rng(seed)
        shapes = {"fc0.w": (self.his * self.n, self.hidden), "fc0.b": (self.hidden,),
                  "fc1.w": (self.hidden, self.n), "fc1.b": (self.n,)}
        out = {}
        for name, shape in shapes.items():
            value = np.zeros(shape) if zero or len(shape) == 1 else xavier_uniform(shape, rng)
            out[name] = Tensor(value, name=name, requires_grad=True)
        return out

    def forward(self, params: Mapping[str, Tensor], x: np.ndarray) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        flat = Tensor._wrap(x.reshape(x.shape[0], -1))
        h = ad.relu(ad.add_bias(ad.matmul(flat, params["fc0.w"]), params["fc0.b"]))
        return ad.add_bias(ad.matmul(h, params["fc1.w"]), params["fc1.b"])


def fnn_forecast_train(train_set: WindowSet, val_set: WindowSet, hidden_size: int = 64,
                       cfg: TrainConfig = TrainConfig()):
    """Train the FNN baseline with the shared trainer; returns (model, params, report)."""
    model = FNN(train_set.x.shape[1], train_set.n, hidden_size)
    params, report = train(model.forward, model.init_params(cfg.seed), train_set, val_set, cfg)
    return model, params, report


def score_model(forward, params, test_set: WindowSet, raw_test: WindowSet, stats: NormStats):
    """Metrics in traffic units: predictions are mapped back with ``stats``."""
    pred = stats.invert(predict(forward, params, test_set))
    return metrics(pred, raw_test.y), pred


# -- report files ------------------------------------------------------------

METRICS_HEADER = ["model", "horizon", "mae", "rmse", "mape"]
SERIES_HEADER = ["time_index", "truth", "prediction"]


def emit_report(rows: Iterable, path, kind: str = "metrics_csv") -> None:
    """Write ``metrics_csv`` rows ``(model, horizon, MetricsReport)`` or
    ``series_csv`` rows ``(time_index, truth, prediction)``."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if kind == "metrics_csv":
            writer.writerow(METRICS_HEADER)
            for model, horizon, rep in rows:
                writer.writerow([model, horizon, repr(rep.mae), repr(rep.rmse), repr(rep.mape)])
        elif kind == "series_csv":
            writer.writerow(SERIES_HEADER)
            for idx, truth, pred in rows:
                writer.writerow([int(idx), repr(float(truth)), repr(float(pred))])
        else:
            raise ValueError(f"unknown report kind {kind!r}")


def read_report(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def series_rows(truth: np.ndarray, pred: np.ndarray, sensor: int, offset: int = 0) -> list[tuple]:
    return [(offset + i, truth[i, sensor], pred[i, sensor]) for i in range(truth.shape[0])]


def write_train_report(path, report: TrainReport) -> None:
    Path(path).write_text(report.to_csv(), encoding="utf-8")


def metrics_table(entries: Sequence[tuple[str, str, MetricsReport]]) -> str:
    lines = [f"{'model':<12}{'horizon':>9}{'MAE':>10}{'RMSE':>10}{'MAPE%':>10}"]
    for model, horizon, r in entries:
        lines.append(f"{model:<12}{horizon:>9}{r.mae:>10.4f}{r.rmse:>10.4f}{r.mape:>10.3f}")
    return "\n".join(lines)
