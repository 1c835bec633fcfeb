"""Gradient-based feature attributions and their scalar summaries.

All methods explain the pre-softmax logit of the class the model predicts at
the original input; that class stays fixed for every path or noise point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .numcore import ModelParams, grad_input_batch, predict_batch

IG_STEPS = 25
GS_SAMPLES = 5
GS_BASELINE_STD = 0.001
GS_NOISE_STD = 0.001


class Method(str, enum.Enum):
    IXG = "IXG"
    SL = "SL"
    IG = "IG"
    GS = "GS"


class ScoreKind(str, enum.Enum):
    VARIANCE = "Variance"
    L1 = "L1"
    L2 = "L2"
    LOSS = "Loss"

    @classmethod
    def parse(cls, text: str) -> "ScoreKind":
        aliases = {"variance": cls.VARIANCE, "var": cls.VARIANCE, "l1": cls.L1, "l1norm": cls.L1,
                   "l2": cls.L2, "l2norm": cls.L2, "loss": cls.LOSS}
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown score kind {text!r}") from None


@dataclass
class AttributionVector:
    phi: np.ndarray
    method: Method
    target_class: int


SeedLike = Union[int, Sequence[int]]


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d feature vector, got shape {x.shape}")
    return x[None, :]


# ---------------------------------------------------------------- batched

def ixg_batch(params: ModelParams, X: np.ndarray, targets: Optional[np.ndarray] = None) -> np.ndarray:
    if targets is None:
        targets = predict_batch(params, X)
    return np.asarray(X, dtype=np.float64) * grad_input_batch(params, X, targets)


def saliency_batch(params: ModelParams, X: np.ndarray, targets: Optional[np.ndarray] = None) -> np.ndarray:
    if targets is None:
        targets = predict_batch(params, X)
    return np.abs(grad_input_batch(params, X, targets))


def integrated_gradients_batch(params: ModelParams, X: np.ndarray, n_steps: int = IG_STEPS,
                               targets: Optional[np.ndarray] = None) -> np.ndarray:
    """Zero baseline, right-endpoint Riemann sum over ``alpha = m / n_steps``."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    X = np.asarray(X, dtype=np.float64)
    if targets is None:
        targets = predict_batch(params, X)
    n, d = X.shape
    alphas = np.arange(1, n_steps + 1) / n_steps
    path = (alphas[None, :, None] * X[:, None, :]).reshape(n * n_steps, d)
    grads = grad_input_batch(params, path, np.repeat(targets, n_steps)).reshape(n, n_steps, d)
    return X * grads.mean(axis=1)


def _gs_draws(rng: np.random.Generator, d: int, n_samples: int, noise_std: float):
    input_noise = rng.normal(0.0, 1.0, size=(n_samples, d)) * noise_std
    baselines = rng.normal(0.0, 1.0, size=(n_samples, d)) * GS_BASELINE_STD
    alphas = rng.uniform(0.0, 1.0, size=n_samples)
    return input_noise, baselines, alphas


def _gs_from_draws(params, X, targets, draws):
    n, d = X.shape
    noise = np.stack([dr[0] for dr in draws])  # (n, s, d)
    base = np.stack([dr[1] for dr in draws])
    alpha = np.stack([dr[2] for dr in draws])[:, :, None]
    s = noise.shape[1]
    points = base + alpha * (X[:, None, :] + noise - base)
    grads = grad_input_batch(params, points.reshape(n * s, d), np.repeat(targets, s)).reshape(n, s, d)
    return ((X[:, None, :] - base) * grads).mean(axis=1)


def gradient_shap_batch(params: ModelParams, X: np.ndarray, n_samples: int = GS_SAMPLES,
                        noise_std: float = GS_NOISE_STD, seed: int = 0,
                        targets: Optional[np.ndarray] = None) -> np.ndarray:
    """Row ``i`` equals ``gradient_shap(params, X[i], ..., seed=[seed, i])``."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    X = np.asarray(X, dtype=np.float64)
    if targets is None:
        targets = predict_batch(params, X)
    draws = [_gs_draws(np.random.default_rng([seed, i]), X.shape[1], n_samples, noise_std)
             for i in range(X.shape[0])]
    return _gs_from_draws(params, X, targets, draws)


def attribute_batch(params: ModelParams, X: np.ndarray, method: Method, *, ig_steps: int = IG_STEPS,
                    gs_samples: int = GS_SAMPLES, gs_noise_std: float = GS_NOISE_STD,
                    seed: int = 0) -> np.ndarray:
    method = Method(method)
    if method is Method.IXG:
        return ixg_batch(params, X)
    if method is Method.SL:
        return saliency_batch(params, X)
    if method is Method.IG:
        return integrated_gradients_batch(params, X, ig_steps)
    return gradient_shap_batch(params, X, gs_samples, gs_noise_std, seed)


# ---------------------------------------------------------------- single example

def _wrap(params, x, method, fn) -> AttributionVector:
    X = _as_batch(x)
    target = int(predict_batch(params, X)[0])
    return AttributionVector(fn(X, np.array([target]))[0], method, target)


def ixg(params: ModelParams, x) -> AttributionVector:
    return _wrap(params, x, Method.IXG, lambda X, t: ixg_batch(params, X, t))


def saliency(params: ModelParams, x) -> AttributionVector:
    return _wrap(params, x, Method.SL, lambda X, t: saliency_batch(params, X, t))


def integrated_gradients(params: ModelParams, x, n_steps: int = IG_STEPS) -> AttributionVector:
    return _wrap(params, x, Method.IG, lambda X, t: integrated_gradients_batch(params, X, n_steps, t))


def gradient_shap(params: ModelParams, x, n_samples: int = GS_SAMPLES, noise_std: float = GS_NOISE_STD,
                  seed: SeedLike = 0) -> AttributionVector:
    """Expected ``(x - b) * grad`` at ``b + alpha (x + eta - b)`` with random eta, b, alpha."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")

    def run(X, t):
        draws = [_gs_draws(np.random.default_rng(seed), X.shape[1], n_samples, noise_std)]
        return _gs_from_draws(params, X, t, draws)

    return _wrap(params, x, Method.GS, run)


# ---------------------------------------------------------------- summaries

def summarize_rows(phi: np.ndarray, kind: ScoreKind) -> np.ndarray:
    """Scalar summary per row of an ``(n, d)`` attribution matrix."""
    kind = ScoreKind(kind)
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    if kind is ScoreKind.VARIANCE:
        return np.mean((phi - phi.mean(axis=1, keepdims=True)) ** 2, axis=1)
    if kind is ScoreKind.L1:
        return np.sum(np.abs(phi), axis=1)
    if kind is ScoreKind.L2:
        return np.sqrt(np.sum(phi * phi, axis=1))
    raise ValueError("loss scores come from the model, not from an attribution vector")


def summarize(phi: Union[AttributionVector, np.ndarray], kind: ScoreKind) -> float:
    values = phi.phi if isinstance(phi, AttributionVector) else phi
    return float(summarize_rows(np.asarray(values)[None, :], kind)[0])
