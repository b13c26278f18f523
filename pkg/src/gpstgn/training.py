"""Mini-batch Adam with coupled L2 decay and early stopping on validation MSE."""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import time
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tape, Tensor, backward, mse_loss
from .data import WindowSet
from .errors import ConfigError, DataError, NumericError, ShapeError

log = logging.getLogger(__name__)

ForwardFn = Callable[[Mapping[str, Tensor], np.ndarray], Tensor]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 32
    max_epochs: int = 200
    weight_decay: float = 0.0005
    seed: int = 42
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("invalid Adam hyper-parameters")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls({k: np.zeros(p.shape) for k, p in params.items()},
                   {k: np.zeros(p.shape) for k, p in params.items()})


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[dict[str, Tensor], AdamState]:
    """One bias-corrected Adam update; decay is added to the gradient (coupled L2)."""
    step = state.step + 1
    c1 = 1.0 - cfg.beta1 ** step
    c2 = 1.0 - cfg.beta2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name])
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        g = g + cfg.weight_decay * p.data
        m = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        update = cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        new_params[name] = Tensor(p.data - update, name=name, requires_grad=True)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, step)


def evaluate_loss(forward: ForwardFn, params: Mapping[str, Tensor], dataset: WindowSet,
                  batch_size: int = 256) -> float:
    """Sample-weighted mean MSE, independent of ``batch_size``."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    sq = predict(forward, params, dataset, batch_size) - dataset.y
    return float(np.mean(sq * sq))


def predict(forward: ForwardFn, params: Mapping[str, Tensor], dataset: WindowSet,
            batch_size: int = 256) -> np.ndarray:
    out = [forward(params, dataset.x[i:i + batch_size]).data
           for i in range(0, len(dataset), batch_size)]
    return np.concatenate(out, axis=0)


class EarlyStopping:
    """Tracks the best validation loss; ``step`` returns True when training should stop."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch = 0
        self.counter = 0

    def step(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best - self.min_delta:
            self.best, self.best_epoch, self.counter = val_loss, epoch, 0
            return False
        self.counter += 1
        return self.counter >= self.patience


@dataclass
class TrainReport:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    initial_val_loss: float = math.nan
    best_epoch: int = 0
    stop_reason: str = ""
    wall_time: float = 0.0
    permutations: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{e},{t!r},{v!r}" for e, t, v in zip(self.epochs, self.train_loss, self.val_loss)]
        return "\n".join(lines) + "\n"


def train(forward: ForwardFn, params: Mapping[str, Tensor], train_set: WindowSet, val_set: WindowSet,
          cfg: TrainConfig = TrainConfig()) -> tuple[dict[str, Tensor], TrainReport]:
    """Train ``params`` and return those of the best validation epoch.

    Each epoch visits the training windows in a seeded permutation (kept in
    the report). Raises :class:`NumericError` on a non-finite batch loss.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training needs at least one training and one validation window")
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    params = {k: Tensor(v.data, name=k, requires_grad=True) for k, v in params.items()}
    state = AdamState.zeros_like(params)
    report = TrainReport(initial_val_loss=evaluate_loss(forward, params, val_set))
    stopper = EarlyStopping(cfg.patience)
    best = dict(params)
    n = len(train_set)

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        report.permutations.append(perm)
        total = 0.0
        for bi, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[lo:lo + cfg.batch_size]
            with Tape():
                loss = mse_loss(forward(params, train_set.x[idx]), Tensor._wrap(train_set.y[idx]))
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {bi}")
            grads = backward(loss, params)
            params, state = adam_step(params, grads, state, cfg)
            total += value * len(idx)
        val = evaluate_loss(forward, params, val_set)
        if not math.isfinite(val):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        report.epochs.append(epoch)
        report.train_loss.append(total / n)
        report.val_loss.append(val)
        stop = stopper.step(epoch, val)
        if stopper.best_epoch == epoch:
            best = dict(params)
        log.debug("epoch %d train %.6g val %.6g", epoch, total / n, val)
        if stop:
            report.stop_reason = f"early stopping (patience {cfg.patience})"
            break
    else:
        report.stop_reason = "max_epochs reached"
    report.best_epoch = stopper.best_epoch
    report.wall_time = time.perf_counter() - start
    return best, report
