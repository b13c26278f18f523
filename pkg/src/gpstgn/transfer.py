"""Fine-tune a source-network checkpoint on a fraction of target-network data."""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path

from .checkpoint import Checkpoint, from_params
from .data import SplitSpec, TrafficSeries, WindowSet, fit_norm, horizon_steps, split, window_count
from .errors import ConfigError, DataError, TransferIncompatibleError
from .evaluation import MetricsReport, score_model
from .graph import WeightedGraph
from .model import STGCN, ModelConfig, init_params
from .pipeline import prepare
from .pruning import PruneConfig, apply_node_mask, prune
from .training import TrainConfig, TrainReport, train


@dataclass(frozen=True)
class TransferConfig:
    fraction: float = 0.25
    train: TrainConfig = TrainConfig()
    scratch_baseline: bool = True

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"transfer fraction must be in (0, 1], got {self.fraction}")


@dataclass
class TransferRow:
    horizon_minutes: float
    metrics: MetricsReport
    scratch: MetricsReport | None = None


@dataclass
class TransferReport:
    fraction: float
    source_tag: str = ""
    rows: list[TransferRow] = field(default_factory=list)
    fine_tune_report: TrainReport | None = None
    scratch_report: TrainReport | None = None

    HEADER = "f,horizon_minutes,mae,rmse,mape,scratch_mae,scratch_rmse,scratch_mape"

    def to_csv_lines(self) -> list[str]:
        out = []
        for r in self.rows:
            s = r.scratch
            scratch = ("", "", "") if s is None else (repr(s.mae), repr(s.rmse), repr(s.mape))
            out.append(",".join([repr(self.fraction), repr(float(r.horizon_minutes)), repr(r.metrics.mae),
                                 repr(r.metrics.rmse), repr(r.metrics.mape), *scratch]))
        return out


def write_transfer_reports(path, reports) -> None:
    lines = [TransferReport.HEADER]
    for rep in reports:
        lines.extend(rep.to_csv_lines())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def subset_count(count: int, fraction: float) -> int:
    if count < 1:
        raise DataError("target training set is empty")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    # guard against 0.25 * 100 landing a hair above 25
    return min(count, max(1, math.ceil(fraction * count - 1e-9)))


def subset_target(train_windows: WindowSet, fraction: float) -> WindowSet:
    """The chronologically first ``ceil(fraction * count)`` windows."""
    k = subset_count(len(train_windows), fraction)
    return train_windows.take(slice(0, k))


def check_compatible(source: ModelConfig, target: ModelConfig) -> None:
    fields_ = ("num_blocks", "channels", "kt", "ks", "his", "activation", "in_channels", "head_linear_layers")
    diffs = [f"{f}: {getattr(source, f)} vs {getattr(target, f)}" for f in fields_
             if getattr(source, f) != getattr(target, f)]
    if diffs:
        raise TransferIncompatibleError("source checkpoint config differs from target: " + "; ".join(diffs))


def fine_tune(
    source: Checkpoint,
    series: TrafficSeries,
    graph: WeightedGraph,
    horizon_minutes: float,
    cfg: TransferConfig = TransferConfig(),
    *,
    target_config: ModelConfig | None = None,
    prune_cfg: PruneConfig | None = None,
    split_spec: SplitSpec = SplitSpec(),
    norm_mode: str = "global",
    laplacian_mode: str = "power_iteration",
):
    """Warm-start from ``source`` and train on a prefix of the target windows.

    The target basis comes from the (optionally pruned) target graph and the
    normalization is refitted on the rows covered by the training subset.
    Returns ``(checkpoint, report)``; with ``cfg.scratch_baseline`` the report
    also scores a model trained from Xavier init under the same budget.
    """
    model_cfg = source.config
    if target_config is not None:
        check_compatible(model_cfg, target_config)
    his = model_cfg.his
    pred = horizon_steps(horizon_minutes, series.interval_minutes)

    kept = None
    if prune_cfg is not None:
        train_rows, _, _ = split(series, split_spec)
        kept = prune(graph, train_rows, prune_cfg).kept
    masked = series if kept is None else apply_node_mask(series, kept)
    train_rows, _, _ = split(masked, split_spec)
    k = subset_count(window_count(train_rows.t, his, pred), cfg.fraction)
    stats = fit_norm(train_rows.rows(0, k - 1 + his + pred), norm_mode)

    prep = prepare(series, graph, his, pred, split_spec=split_spec, prune_cfg=prune_cfg, kept=kept,
                   stats=stats, ks=model_cfg.ks, laplacian_mode=laplacian_mode)
    subset = prep.train.take(slice(0, k))
    model = STGCN(model_cfg, prep.basis)

    tuned, ft_report = train(model.forward, source.tensors(), subset, prep.val, cfg.train)
    tuned_metrics, _ = score_model(model.forward, tuned, prep.test, prep.raw_test, stats)

    scratch_metrics = scratch_report = None
    if cfg.scratch_baseline:
        scratch, scratch_report = train(model.forward, init_params(model_cfg, cfg.train.seed), subset,
                                        prep.val, cfg.train)
        scratch_metrics, _ = score_model(model.forward, scratch, prep.test, prep.raw_test, stats)

    tag = source.metadata.get("source_tag", "")
    meta = {
        "source_tag": tag,
        "transfer_fraction": repr(cfg.fraction),
        "pred_steps": str(pred),
        "seed": str(cfg.train.seed),
        "epochs": str(len(ft_report.epochs)),
        "best_epoch": str(ft_report.best_epoch),
        "train_windows": str(len(subset)),
        "nodes": str(prep.graph.n),
    }
    if kept is not None:
        meta["kept"] = " ".join(str(i) for i in kept)
    ckpt = from_params(model_cfg, tuned, stats, meta)
    report = TransferReport(cfg.fraction, tag, [TransferRow(horizon_minutes, tuned_metrics, scratch_metrics)],
                            ft_report, scratch_report)
    return ckpt, report
