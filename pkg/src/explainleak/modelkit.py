"""Non-private training of the small classifier used for target and shadow models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .numcore import (
    MlpConfig,
    ModelParams,
    cross_entropy_batch,
    forward_batch,
    mean_loss_grad,
)

# Stream tags keep RNG draws for different purposes disjoint under one seed.
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_DP = 2


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError(f"need X (n, d) and y (n,), got {self.X.shape} and {self.y.shape}")
        if not self.num_classes:
            self.num_classes = int(self.y.max()) + 1 if self.y.size else 0

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, mask_or_idx) -> "Dataset":
        return Dataset(self.X[mask_or_idx], self.y[mask_or_idx], self.num_classes)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    minibatch_size: int = 32
    seed: int = 0
    init_seed: Optional[int] = None  # shared starting weights across models; None -> seed

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.minibatch_size < 1:
            raise ValueError(f"minibatch_size must be >= 1, got {self.minibatch_size}")

    @property
    def start_seed(self) -> int:
        return self.seed if self.init_seed is None else self.init_seed


def init_params(config: MlpConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights in ``±sqrt(6 / (fan_in + fan_out))``, zero biases."""
    rng = np.random.default_rng([seed, STREAM_INIT])
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, config)


def check_compatible(dataset: Dataset, config: MlpConfig) -> None:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.dim != config.input_dim:
        raise ValueError(f"dataset has {dataset.dim} features, model expects {config.input_dim}")
    if dataset.y.min() < 0 or dataset.y.max() >= config.num_classes:
        raise ValueError(f"labels outside [0, {config.num_classes})")


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, STREAM_SHUFFLE, epoch]).permutation(n)


def sgd_train(
    dataset: Dataset,
    config: MlpConfig,
    train: TrainConfig,
    on_epoch: Optional[Callable[[int, ModelParams], None]] = None,
) -> ModelParams:
    """Plain mini-batch SGD on mean cross-entropy.

    Each epoch draws its own permutation from ``(seed, epoch)``, so training for
    ``e`` epochs is an exact prefix of training for ``e + 1``.  The final
    mini-batch of an epoch may be short.
    """
    check_compatible(dataset, config)
    n = len(dataset)
    if train.minibatch_size > n:
        raise ValueError(f"minibatch_size {train.minibatch_size} exceeds training-set size {n}")
    params = init_params(config, train.start_seed)
    for epoch in range(train.epochs):
        perm = epoch_permutation(train.seed, epoch, n)
        for start in range(0, n, train.minibatch_size):
            idx = perm[start:start + train.minibatch_size]
            grad = mean_loss_grad(params, dataset.X[idx], dataset.y[idx])
            for i in range(params.num_layers):
                params.weights[i] -= train.learning_rate * grad.weights[i]
                params.biases[i] -= train.learning_rate * grad.biases[i]
        if on_epoch is not None:
            on_epoch(epoch, params)
    return params


def evaluate(params: ModelParams, dataset: Dataset) -> Tuple[float, float]:
    """(accuracy, mean cross-entropy).  Argmax ties go to the lowest class index."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    logits, probs = forward_batch(params, dataset.X)
    accuracy = float(np.mean(np.argmax(logits, axis=1) == dataset.y))
    mean_loss = float(np.mean(cross_entropy_batch(probs, dataset.y)))
    return accuracy, mean_loss
