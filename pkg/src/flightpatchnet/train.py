"""Minibatch training with validation-driven early stopping.

Each epoch shuffles the training windows with a seeded generator, runs
MSE/Adam updates in the coded target space, then measures validation
MSE. The parameters with the best validation loss are kept; training
stops when validation loss has not improved for `patience` consecutive
epochs, or at the epoch cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, TrainingError
from .model import FlightPatchNet
from .optim import Adam
from .tensor import Tensor
from .windows import WindowDataset


@dataclass
class TrainConfig:
    max_epochs: int = 30
    patience: int = 3
    batch_size: int = 64
    lr: float = 1e-4
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 1 <= self.patience < self.max_epochs:
            raise ConfigError(
                f"patience ({self.patience}) must be in [1, max_epochs={self.max_epochs})"
            )
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


class EarlyStopper:
    """Strict non-decrease rule: a round with loss >= best counts against
    patience; `patience` such consecutive rounds stop the run."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch: int | None = None
        self.rounds_without_improvement = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch's validation loss; returns True if it improved."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.rounds_without_improvement = 0
            return True
        self.rounds_without_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.rounds_without_improvement >= self.patience


@dataclass
class TrainResult:
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_val_mse: float
    history: list[tuple[int, float, float]] = field(default_factory=list)
    stopped_early: bool = False
    steps: int = 0


def dataset_mse(model: FlightPatchNet, ds: WindowDataset, batch_size: int = 512) -> float:
    """Eval-mode MSE over a dataset, sequential canonical reduction."""
    total = 0.0
    with T.no_grad():
        for start in range(0, ds.n, batch_size):
            xb = Tensor(ds.x[start:start + batch_size])
            yb = ds.y[start:start + batch_size]
            pred, _ = model.forward(xb, training=False)
            diff = pred.data - yb
            total += float((diff * diff).sum())
    return total / (ds.n * ds.y.shape[1] * ds.y.shape[2])


def train(model: FlightPatchNet, train_set: WindowDataset, val_set: WindowDataset,
          cfg: TrainConfig, max_steps: int | None = None,
          log=None) -> TrainResult:
    """Fit the model; restores and returns the best-validation parameters."""
    if train_set.n == 0 or val_set.n == 0:
        raise TrainingError("training and validation sets must be non-empty")
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    stopper = EarlyStopper(cfg.patience)
    result = TrainResult(best_state=model.state(), best_epoch=0, best_val_mse=math.inf)
    dropout_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2,))
    )
    for epoch in range(1, cfg.max_epochs + 1):
        order_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1, epoch))
        )
        order = order_rng.permutation(train_set.n) if cfg.shuffle else np.arange(train_set.n)
        epoch_sse = 0.0
        seen = 0
        for batch_index, start in enumerate(range(0, train_set.n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb = Tensor(train_set.x[idx])
            yb = Tensor(train_set.y[idx])
            pred, _ = model.forward(xb, training=True, rng=dropout_rng)
            loss = T.mse_loss(pred, yb)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite training loss in epoch {epoch}, batch {batch_index}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_sse += value * idx.size
            seen += idx.size
            result.steps += 1
            if max_steps is not None and result.steps >= max_steps:
                break
        train_mse = epoch_sse / seen
        val_mse = dataset_mse(model, val_set)
        if not math.isfinite(val_mse):
            raise TrainingError(f"non-finite validation loss in epoch {epoch}")
        result.history.append((epoch, train_mse, val_mse))
        if stopper.update(epoch, val_mse):
            result.best_state = model.state()
            result.best_epoch = epoch
            result.best_val_mse = val_mse
        if log is not None:
            log(f"epoch {epoch}: train_mse {train_mse:.6g} val_mse {val_mse:.6g}")
        if max_steps is not None and result.steps >= max_steps:
            break
        if stopper.should_stop:
            result.stopped_early = True
            break
    model.load_state(result.best_state)
    return result


def history_csv(history: list[tuple[int, float, float]]) -> str:
    lines = ["epoch,train_mse,val_mse"]
    for epoch, train_mse, val_mse in history:
        lines.append(f"{epoch},{train_mse!r},{val_mse!r}")
    return "\n".join(lines) + "\n"
