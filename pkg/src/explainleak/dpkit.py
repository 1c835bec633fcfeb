"""DP-SGD with automatic per-sample clipping and an RDP accountant.

Clipping rescales each per-sample gradient by ``1 / (||g|| + gamma)``, which
bounds every contribution below unit norm, so the Gaussian noise is drawn
with sensitivity ``C = 1``.  Lots are Poisson-sampled with rate ``q``.

The accountant evaluates Renyi DP of the Poisson-subsampled Gaussian
mechanism at integer orders through the binomial expansion of its moment

    A_alpha = sum_i C(alpha, i) q^i (1-q)^(alpha-i) exp((i^2 - i) / (2 sigma^2))

composes over steps, and converts with ``eps = min_a [T*rdp(a) + log(1/delta)/(a-1)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .modelkit import STREAM_DP, Dataset, TrainConfig, check_compatible, init_params
from .numcore import MlpConfig, ModelParams, per_sample_grads

RDP_ORDERS = tuple(range(2, 65))
SIGMA_BRACKET = (0.3, 100.0)


@dataclass(frozen=True)
class DpConfig:
    noise_multiplier: float
    sampling_rate: float
    steps: int
    delta: float = 1e-5
    stability_constant: float = 0.01
    allow_zero_noise: bool = False  # test hook: sigma = 0 reduces to clipped SGD

    def __post_init__(self):
        if self.noise_multiplier < 0 or (self.noise_multiplier == 0 and not self.allow_zero_noise):
            raise ValueError(f"noise_multiplier must be > 0, got {self.noise_multiplier}")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError(f"sampling_rate must be in (0, 1], got {self.sampling_rate}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not self.stability_constant > 0:
            raise ValueError(f"stability_constant must be > 0, got {self.stability_constant}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")


def steps_for_epochs(epochs: int, sampling_rate: float) -> int:
    """Number of Poisson lots that cover ``epochs`` passes in expectation."""
    return max(1, epochs * math.ceil(1.0 / sampling_rate))


def clip_auto(g, gamma: float) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    return g / (np.linalg.norm(g) + gamma)


def clip_auto_rows(G: np.ndarray, gamma: float) -> np.ndarray:
    return G / (np.linalg.norm(G, axis=1, keepdims=True) + gamma)


def dp_sgd_train(dataset: Dataset, config: MlpConfig, train: TrainConfig, dp: DpConfig) -> ModelParams:
    """Noisy descent: ``theta -= lr * (sum_i clip(g_i) + N(0, sigma^2 I)) / (q N)``.

    Lot membership and noise for step ``t`` come from an RNG stream keyed by
    ``(seed, t)``.  ``train.minibatch_size`` and ``train.epochs`` are unused;
    the lot size is set by ``dp.sampling_rate`` and the length by ``dp.steps``.
    """
    check_compatible(dataset, config)
    n = len(dataset)
    params = init_params(config, train.start_seed)
    expected_lot = dp.sampling_rate * n
    for step in range(dp.steps):
        rng = np.random.default_rng([train.seed, STREAM_DP, step])
        in_lot = rng.random(n) < dp.sampling_rate
        noise = rng.standard_normal(params.num_params) * dp.noise_multiplier
        total = noise
        if in_lot.any():
            G = per_sample_grads(params, dataset.X[in_lot], dataset.y[in_lot])
            total = clip_auto_rows(G, dp.stability_constant).sum(axis=0) + noise
        flat = params.flatten() - train.learning_rate * total / expected_lot
        params = ModelParams.unflatten(flat, config)
    return params


# ---------------------------------------------------------------- accounting

def _log_comb(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def rdp_subsampled_gaussian(sigma: float, q: float, alpha: int) -> float:
    """RDP of one Poisson-subsampled Gaussian step at integer order ``alpha``."""
    if q == 1.0:
        return alpha / (2.0 * sigma**2)
    i = np.arange(alpha + 1, dtype=np.float64)
    log_terms = _log_comb(alpha, i) + i * math.log(q) + (alpha - i) * math.log1p(-q) + (i * i - i) / (2.0 * sigma**2)
    return float(logsumexp(log_terms)) / (alpha - 1)


def _check_accounting_args(sigma: float, q: float, steps: int, delta: float) -> None:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0 for accounting, got {sigma}")
    if not 0 < q <= 1:
        raise ValueError(f"sampling rate must be in (0, 1], got {q}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")


def rdp_to_epsilon(rdp, orders, delta: float) -> float:
    rdp = np.asarray(rdp, dtype=np.float64)
    orders = np.asarray(orders, dtype=np.float64)
    return float(np.min(rdp + math.log(1.0 / delta) / (orders - 1)))


def account_epsilon(sigma: float, q: float, steps: int, delta: float, orders=RDP_ORDERS) -> float:
    _check_accounting_args(sigma, q, steps, delta)
    rdp = [steps * rdp_subsampled_gaussian(sigma, q, a) for a in orders]
    return rdp_to_epsilon(rdp, orders, delta)


def calibrate_sigma(target_epsilon: float, q: float, steps: int, delta: float, rel_tol: float = 0.02) -> float:
    """Smallest-ish sigma in the bracket whose epsilon lands within ``rel_tol`` of the target.

    Bisects in log-sigma and returns the upper end, so the reported epsilon
    never exceeds the target.
    """
    if not target_epsilon > 0:
        raise ValueError(f"target epsilon must be > 0, got {target_epsilon}")
    lo, hi = SIGMA_BRACKET
    if account_epsilon(lo, q, steps, delta) < target_epsilon * (1 - rel_tol):
        raise ValueError(f"target eps={target_epsilon} needs sigma < {lo}")
    if account_epsilon(hi, q, steps, delta) > target_epsilon * (1 + rel_tol):
        raise ValueError(f"target eps={target_epsilon} needs sigma > {hi}")
    for _ in range(100):
        mid = math.sqrt(lo * hi)
        if account_epsilon(mid, q, steps, delta) > target_epsilon:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-6:
            break
    return hi
