"""Momentum SGD training loop.

Classic heavy-ball update, velocity initialized to zero:

    v <- momentum * v - learning_rate * g
    w <- w + v

One epoch is one pass over the dataset in a freshly shuffled order
(derived from the run seed and epoch index); the last short batch is
kept. Training is bit-deterministic given (seed, dataset order, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from facekit.errors import DomainError, TrainingDiverged
from facekit.netspec import NetworkSpec
from facekit.network import Network
from facekit.rng import Stream, derive


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    momentum: float
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise DomainError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise DomainError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            epochs=int(d["epochs"]),
            learning_rate=float(d["learning_rate"]),
            momentum=float(d["momentum"]),
            batch_size=int(d["batch_size"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def momentum_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    learning_rate: float,
    momentum: float,
) -> None:
    """One in-place heavy-ball update across all parameter blocks."""
    for name, w in params.items():
        v = velocity[name]
        v *= momentum
        v -= learning_rate * grads[name]
        w += v


def _stack_dataset(dataset) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple) and len(dataset) == 2:
        xs, ys = dataset
        return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.int64)
    if len(dataset) == 0:
        raise DomainError("training dataset is empty")
    xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in dataset])
    ys = np.array([int(y) for _, y in dataset], dtype=np.int64)
    return xs, ys


def train(
    spec: NetworkSpec,
    params: dict[str, np.ndarray],
    dataset: Sequence,
    config: TrainConfig,
    callback: Callable[[EpochStats], None] | None = None,
) -> tuple[dict[str, np.ndarray], list[EpochStats]]:
    """Train a copy of `params` on the dataset; returns (params', history).

    `dataset` is either a sequence of (tensor, label) pairs or a
    pre-stacked (X, y) tuple. Labels must lie in [0, class_count). A
    batch size larger than the dataset clamps to full-batch. A non-finite
    loss aborts with a diagnostic naming the failing step.
    """
    xs, ys = _stack_dataset(dataset)
    n = xs.shape[0]
    if n == 0:
        raise DomainError("training dataset is empty")
    if ys.min() < 0 or ys.max() >= spec.class_count:
        raise DomainError(
            f"labels must lie in [0, {spec.class_count}), got range "
            f"[{ys.min()}, {ys.max()}]"
        )
    batch = min(config.batch_size, n)

    current = {name: v.copy() for name, v in params.items()}
    velocity = {name: np.zeros_like(v) for name, v in params.items()}
    net = Network(spec, current)
    history: list[EpochStats] = []
    step = 0
    for epoch in range(config.epochs):
        order = Stream(derive(config.seed, "epoch", epoch)).permutation(n)
        loss_sum = 0.0
        hit_sum = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, acc, grads = net.loss_and_grads(xs[idx], ys[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at step {step} (epoch {epoch}, "
                    f"batch starting at {start})"
                )
            momentum_step(current, grads, velocity, config.learning_rate, config.momentum)
            loss_sum += loss * len(idx)
            hit_sum += acc * len(idx)
            step += 1
        stats = EpochStats(epoch=epoch, loss=loss_sum / n, accuracy=hit_sum / n)
        history.append(stats)
        if callback is not None:
            callback(stats)
    return current, history
