"""Shadow-model membership inference over a shared score matrix.

All N+1 models are trained on random halves of one example pool.  For each
choice of target model the other N serve as shadows: per example, their
scores split into IN and OUT populations, a Gaussian is fit to each, and the
target's score is rated by the log-likelihood ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .explainkit import Method, ScoreKind, attribute_batch, summarize_rows
from .modelkit import Dataset
from .numcore import ModelParams, cross_entropy_batch, forward_batch

VAR_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class MembershipMatrix:
    flags: np.ndarray  # (n_examples, n_models), 1 = in that model's training half

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=np.int8)
        if self.flags.ndim != 2:
            raise ValueError(f"membership flags must be 2-d, got shape {self.flags.shape}")
        if not np.isin(self.flags, (0, 1)).all():
            raise ValueError("membership flags must be 0/1")

    @property
    def n_examples(self) -> int:
        return self.flags.shape[0]

    @property
    def n_models(self) -> int:
        return self.flags.shape[1]

    def column(self, m: int) -> np.ndarray:
        return self.flags[:, m].astype(bool)


@dataclass
class ScoreMatrix:
    scores: np.ndarray  # (n_examples, n_models)
    kind: ScoreKind
    method: Optional[Method] = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.kind = ScoreKind(self.kind)
        if self.method is not None:
            self.method = Method(self.method)
        if self.scores.ndim != 2:
            raise ValueError(f"scores must be 2-d, got shape {self.scores.shape}")
        if not np.all(np.isfinite(self.scores)):
            raise FloatingPointError("non-finite entries in score matrix")


@dataclass
class GaussianFit:
    mean: float
    var: float

    def logpdf(self, x):
        return -0.5 * (_LOG_2PI + np.log(self.var) + (np.asarray(x) - self.mean) ** 2 / self.var)


@dataclass
class PerExampleLambda:
    log_lambda: np.ndarray
    is_member: np.ndarray
    degenerate: np.ndarray = field(default=None)  # True where IN or OUT shadow set was empty
    target_model: int = 0


def build_split_plan(n_examples: int, n_models: int, master_seed: int) -> MembershipMatrix:
    if n_examples < 4 or n_examples % 2:
        raise ValueError(f"n_examples must be even and >= 4, got {n_examples}")
    if n_models < 3:
        raise ValueError(f"need at least 3 models, got {n_models}")
    flags = np.zeros((n_examples, n_models), dtype=np.int8)
    for m in range(n_models):
        chosen = np.random.default_rng([master_seed, 3, m]).permutation(n_examples)[: n_examples // 2]
        flags[chosen, m] = 1
    return MembershipMatrix(flags)


def fit_gaussian(samples: Sequence[float]) -> GaussianFit:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("cannot fit a Gaussian to an empty sample set")
    mean = float(samples.mean())
    return GaussianFit(mean, max(float(np.mean((samples - mean) ** 2)), VAR_FLOOR))


def gaussian_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def _masked_fit(values: np.ndarray, mask: np.ndarray):
    """Row-wise mean and floored population variance over ``mask``; count too."""
    count = mask.sum(axis=1)
    safe = np.maximum(count, 1)
    mean = np.where(mask, values, 0.0).sum(axis=1) / safe
    var = np.where(mask, (values - mean[:, None]) ** 2, 0.0).sum(axis=1) / safe
    return mean, np.maximum(var, VAR_FLOOR), count


def lira_scores(scores: ScoreMatrix, membership: MembershipMatrix, target_model_index: int) -> PerExampleLambda:
    S = scores.scores
    if S.shape != membership.flags.shape:
        raise ValueError(f"score matrix {S.shape} and membership {membership.flags.shape} differ in shape")
    m = target_model_index
    if not 0 <= m < S.shape[1]:
        raise ValueError(f"target model index {m} out of range")
    shadow_cols = [j for j in range(S.shape[1]) if j != m]
    shadow = S[:, shadow_cols]
    flags = membership.flags[:, shadow_cols].astype(bool)
    mu_in, var_in, n_in = _masked_fit(shadow, flags)
    mu_out, var_out, n_out = _masked_fit(shadow, ~flags)
    obs = S[:, m]
    log_lambda = gaussian_logpdf(obs, mu_in, var_in) - gaussian_logpdf(obs, mu_out, var_out)
    degenerate = (n_in == 0) | (n_out == 0)
    log_lambda = np.where(degenerate, 0.0, log_lambda)
    return PerExampleLambda(log_lambda, membership.column(m), degenerate, m)


def lira_runs(scores: ScoreMatrix, membership: MembershipMatrix) -> List[PerExampleLambda]:
    return [lira_scores(scores, membership, m) for m in range(membership.n_models)]


def threshold_attack_scores(scores: ScoreMatrix, target_model_index: int) -> np.ndarray:
    """Member iff variance <= tau; negated so that larger means more member-like."""
    if scores.kind is not ScoreKind.VARIANCE:
        raise ValueError(f"thresholding attack needs variance scores, got {scores.kind.value}")
    return -scores.scores[:, target_model_index]


# ---------------------------------------------------------------- score collection

def model_scores(params: ModelParams, dataset: Dataset, method: Optional[Method], kinds: Sequence[ScoreKind],
                 *, ig_steps: int = 25, gs_samples: int = 5, gs_noise_std: float = 0.001,
                 seed: int = 0) -> dict:
    """Column of scores for one model and every requested kind, sharing one attribution pass."""
    out = {}
    kinds = [ScoreKind(k) for k in kinds]
    if ScoreKind.LOSS in kinds:
        _, probs = forward_batch(params, dataset.X)
        out[ScoreKind.LOSS] = cross_entropy_batch(probs, dataset.y)
    attr_kinds = [k for k in kinds if k is not ScoreKind.LOSS]
    if attr_kinds:
        if method is None:
            raise ValueError("attribution scores need an explanation method")
        phi = attribute_batch(params, dataset.X, method, ig_steps=ig_steps, gs_samples=gs_samples,
                              gs_noise_std=gs_noise_std, seed=seed)
        for k in attr_kinds:
            out[k] = summarize_rows(phi, k)
    return out


def collect_scores(models: Sequence[ModelParams], membership: MembershipMatrix, dataset: Dataset,
                   method: Optional[Method], kind: ScoreKind, **explain_kw) -> ScoreMatrix:
    kind = ScoreKind(kind)
    if len(models) != membership.n_models:
        raise ValueError(f"{len(models)} models for {membership.n_models} membership columns")
    if len(dataset) != membership.n_examples:
        raise ValueError(f"{len(dataset)} examples for {membership.n_examples} membership rows")
    cols = [model_scores(p, dataset, method, [kind], **explain_kw)[kind] for p in models]
    return ScoreMatrix(np.column_stack(cols), kind, None if kind is ScoreKind.LOSS else method)


def _run(models, membership, dataset, method, kind, **kw) -> List[PerExampleLambda]:
    return lira_runs(collect_scores(models, membership, dataset, method, kind, **kw), membership)


def run_var_lrt(models, membership, dataset, method, **kw) -> List[PerExampleLambda]:
    return _run(models, membership, dataset, method, ScoreKind.VARIANCE, **kw)


def run_l1_lrt(models, membership, dataset, method, **kw) -> List[PerExampleLambda]:
    return _run(models, membership, dataset, method, ScoreKind.L1, **kw)


def run_l2_lrt(models, membership, dataset, method, **kw) -> List[PerExampleLambda]:
    return _run(models, membership, dataset, method, ScoreKind.L2, **kw)


def run_loss_lira(models, membership, dataset, method=None, **kw) -> List[PerExampleLambda]:
    return _run(models, membership, dataset, None, ScoreKind.LOSS, **kw)
