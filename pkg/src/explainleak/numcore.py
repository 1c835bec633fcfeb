"""Dense arithmetic and hand-written reverse-mode gradients for a GELU MLP.

The network is ``x -> [W_l a + b_l -> gelu]* -> W_L a + b_L -> logits``.
Weight matrices are stored ``(fan_out, fan_in)`` so that a single linear
layer computes ``logits = W @ x + b`` and row ``W[c]`` is the input-gradient
of logit ``c``.

Everything works in float64.  Batched helpers (``*_batch``) are what the
rest of the package calls; the single-example functions are thin wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_sizes: Tuple[int, ...] = (64,)
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden sizes must be >= 1, got {self.hidden_sizes}")

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.num_classes)


@dataclass
class ModelParams:
    """Per-layer weights ``(fan_out, fan_in)`` and biases ``(fan_out,)``."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    config: MlpConfig = field(default=None)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        sizes = [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != sizes[i] or b.shape != (w.shape[0],):
                raise ValueError(f"inconsistent shapes at layer {i}: W{w.shape}, b{b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise FloatingPointError(f"non-finite parameters at layer {i}")
        inferred = MlpConfig(sizes[0], tuple(sizes[1:-1]), sizes[-1])
        if self.config is None:
            self.config = inferred
        elif self.config.layer_sizes != inferred.layer_sizes:
            raise ValueError(f"params shapes {inferred.layer_sizes} do not match config {self.config.layer_sizes}")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        """Layer-major; within a layer the row-major weights come before the bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, flat: np.ndarray, config: MlpConfig) -> "ModelParams":
        flat = np.asarray(flat, dtype=np.float64)
        sizes = config.layer_sizes
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            pos += fan_in * fan_out
            biases.append(flat[pos:pos + fan_out].copy())
            pos += fan_out
        if pos != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, config needs {pos}")
        return cls(weights, biases, config)

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.config)

    def equals(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights)) and all(
            np.array_equal(a, b) for a, b in zip(self.biases, other.biases)
        )


def zero_params(config: MlpConfig) -> ModelParams:
    sizes = config.layer_sizes
    return ModelParams(
        [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
        [np.zeros(o) for o in sizes[1:]],
        config,
    )


# ---------------------------------------------------------------- activations

def gelu(x):
    """Exact GELU, ``x * Phi(x)`` with Phi evaluated through erf."""
    if np.isscalar(x):
        return x * 0.5 * (1.0 + math.erf(x / _SQRT2))
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(probs, y: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    _check_class(y, probs.shape[-1])
    return float(-math.log(max(float(probs[y]), PROB_FLOOR)))


def cross_entropy_batch(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    _check_class(y, probs.shape[-1])
    p = probs[np.arange(len(y)), y]
    return -np.log(np.maximum(p, PROB_FLOOR))


def _check_class(c, k: int) -> None:
    c = np.asarray(c)
    if c.size and (np.any(c < 0) or np.any(c >= k)):
        raise ValueError(f"class index out of range [0, {k}): {c if c.ndim == 0 else c[(c < 0) | (c >= k)][:5]}")


def _check_inputs(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    d = params.config.input_dim
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"expected inputs with {d} features, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite input features")
    return X


# ---------------------------------------------------------------- forward / backward

def _forward_cache(params: ModelParams, X: np.ndarray):
    """Returns (pre-activations per layer, activations feeding each layer, logits)."""
    acts = [X]
    pres = []
    a = X
    last = params.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pres.append(z)
        if i < last:
            a = gelu(z)
            acts.append(a)
    logits = pres[-1]
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("forward pass produced non-finite logits")
    return pres, acts, logits


def forward_batch(params: ModelParams, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = _check_inputs(params, X)
    _, _, logits = _forward_cache(params, X)
    return logits, softmax(logits)


def forward(params: ModelParams, x) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d feature vector, got shape {x.shape}")
    logits, probs = forward_batch(params, x[None, :])
    return logits[0], probs[0]


def _backward_to_input(params: ModelParams, pres, dlogits: np.ndarray) -> np.ndarray:
    delta = dlogits
    for i in range(params.num_layers - 1, -1, -1):
        upstream = delta @ params.weights[i]
        if i == 0:
            return upstream
        delta = upstream * gelu_grad(pres[i - 1])
    raise AssertionError("unreachable")


def grad_input_batch(params: ModelParams, X: np.ndarray, classes) -> np.ndarray:
    """Row ``n`` holds the gradient of logit ``classes[n]`` with respect to ``X[n]``."""
    X = _check_inputs(params, X)
    k = params.config.num_classes
    classes = np.broadcast_to(np.asarray(classes), (X.shape[0],))
    _check_class(classes, k)
    pres, _, _ = _forward_cache(params, X)
    seed = np.zeros((X.shape[0], k))
    seed[np.arange(X.shape[0]), classes] = 1.0
    return _backward_to_input(params, pres, seed)


def grad_input(params: ModelParams, x, target_class: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return grad_input_batch(params, x[None, :], [target_class])[0]


def _loss_deltas(params: ModelParams, X: np.ndarray, y: np.ndarray):
    """Backpropagates cross-entropy; yields (layer, delta, layer input) from the top down."""
    pres, acts, logits = _forward_cache(params, X)
    probs = softmax(logits)
    delta = probs
    delta[np.arange(len(y)), y] -= 1.0
    for i in range(params.num_layers - 1, -1, -1):
        yield i, delta, acts[i]
        if i > 0:
            delta = (delta @ params.weights[i]) * gelu_grad(pres[i - 1])


def per_sample_grads(params: ModelParams, X: np.ndarray, y) -> np.ndarray:
    """``(n, num_params)`` matrix of per-example cross-entropy gradients in flat layout."""
    X = _check_inputs(params, X)
    y = np.asarray(y, dtype=np.int64)
    _check_class(y, params.config.num_classes)
    n = X.shape[0]
    blocks = [None] * params.num_layers
    for i, delta, a_in in _loss_deltas(params, X, y):
        gw = np.einsum("no,ni->noi", delta, a_in).reshape(n, -1)
        blocks[i] = np.concatenate([gw, delta], axis=1)
    return np.concatenate(blocks, axis=1)


def per_sample_loss_grad(params: ModelParams, x, y: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return per_sample_grads(params, x[None, :], [y])[0]


def mean_loss_grad(params: ModelParams, X: np.ndarray, y) -> ModelParams:
    """Gradient of the mean cross-entropy over a batch, as a ModelParams-shaped object."""
    X = _check_inputs(params, X)
    y = np.asarray(y, dtype=np.int64)
    _check_class(y, params.config.num_classes)
    n = X.shape[0]
    gws = [None] * params.num_layers
    gbs = [None] * params.num_layers
    for i, delta, a_in in _loss_deltas(params, X, y):
        gws[i] = delta.T @ a_in / n
        gbs[i] = delta.sum(axis=0) / n
    return ModelParams(gws, gbs, params.config)


def logit_batch(params: ModelParams, X: np.ndarray, classes) -> np.ndarray:
    logits, _ = forward_batch(params, X)
    classes = np.broadcast_to(np.asarray(classes), (logits.shape[0],))
    return logits[np.arange(logits.shape[0]), classes]


def predict_batch(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Argmax class; ``np.argmax`` resolves ties to the lowest index."""
    logits, _ = forward_batch(params, X)
    return np.argmax(logits, axis=1)
