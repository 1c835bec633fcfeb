"""The N+1-model audit: split, train, score, attack, aggregate, persist.

Every random draw is keyed by (master seed, purpose tag, model index), so the
artifacts do not depend on how tasks are spread over worker processes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .. import __version__
from ..attackkit import (
    MembershipMatrix,
    ScoreMatrix,
    build_split_plan,
    lira_runs,
    model_scores,
    threshold_attack_scores,
)
from ..dpkit import DpConfig, account_epsilon, calibrate_sigma, dp_sgd_train, steps_for_epochs
from ..evalkit import AttackMetrics, RocCurve, RunMetrics, aggregate, roc_curve
from ..explainkit import Method, ScoreKind
from ..modelkit import Dataset, TrainConfig, evaluate, sgd_train
from ..numcore import ModelParams
from . import io
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .data import gen_synthetic_blobs, load_csv

log = logging.getLogger(__name__)

TAG_TRAIN, TAG_INIT, TAG_GS = 10, 11, 12

ATTACK_FOR_KIND = {
    ScoreKind.VARIANCE: "var_lrt",
    ScoreKind.L1: "l1_lrt",
    ScoreKind.L2: "l2_lrt",
    ScoreKind.LOSS: "loss_lira",
}
NO_METHOD = "na"


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def derive_seed(master_seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([master_seed, *tags]).generate_state(1)[0])


# ---------------------------------------------------------------- data + training

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.source == "csv":
        ds = load_csv(d.path, d.label_column)
        if len(ds) % 2:
            raise ConfigError(f"{d.path}: need an even number of examples, got {len(ds)}")
        return ds
    return gen_synthetic_blobs(d.n, d.d, d.k, d.separation, cfg.seed if d.seed is None else d.seed)


@dataclass
class DpPlan:
    config: DpConfig
    learning_rate: float
    epsilon: float


def plan_dp(cfg: ExperimentConfig, n_train: int) -> Optional[DpPlan]:
    if cfg.dp is None:
        return None
    p = cfg.dp
    q = p.sampling_rate if p.sampling_rate is not None else min(1.0, cfg.train.minibatch_size / n_train)
    steps = steps_for_epochs(p.epochs if p.epochs is not None else cfg.train.epochs, q)
    if p.epsilon is not None:
        sigma = calibrate_sigma(p.epsilon, q, steps, p.delta)
    else:
        sigma = p.noise_multiplier
    dpc = DpConfig(sigma, q, steps, p.delta, p.stability_constant)
    lr = p.learning_rate if p.learning_rate is not None else cfg.train.learning_rate
    return DpPlan(dpc, lr, account_epsilon(sigma, q, steps, p.delta))


def _train_one(task):
    m, dataset, in_mask, mlp, train, dp_plan = task
    members = dataset.subset(in_mask)
    if dp_plan is None:
        params = sgd_train(members, mlp, train)
    else:
        params = dp_sgd_train(members, mlp, dataclasses.replace(train, learning_rate=dp_plan.learning_rate),
                              dp_plan.config)
    train_acc, _ = evaluate(params, members)
    test_acc, _ = evaluate(params, dataset.subset(~in_mask))
    return params, train_acc, test_acc


def _score_one(task):
    params, dataset, methods, kinds, attack, gs_seed = task
    cols = {}
    if ScoreKind.LOSS in kinds:
        cols[(None, ScoreKind.LOSS)] = model_scores(params, dataset, None, [ScoreKind.LOSS])[ScoreKind.LOSS]
    expl = [k for k in kinds if k is not ScoreKind.LOSS]
    for method in methods if expl else ():
        got = model_scores(params, dataset, method, expl, ig_steps=attack.ig_steps, gs_samples=attack.gs_samples,
                           gs_noise_std=attack.gs_noise_std, seed=gs_seed)
        for k in expl:
            cols[(method, k)] = got[k]
    return cols


def _fan_out(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class TrainedModels:
    models: List[ModelParams]
    membership: MembershipMatrix
    train_accuracy: List[float]
    test_accuracy: List[float]
    dp: Optional[DpPlan] = None

    def summary(self) -> Dict:
        out = {
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "mean_train_accuracy": float(np.mean(self.train_accuracy)),
            "mean_test_accuracy": float(np.mean(self.test_accuracy)),
            "private": self.dp is not None,
        }
        if self.dp is not None:
            c = self.dp.config
            out.update(noise_multiplier=c.noise_multiplier, sampling_rate=c.sampling_rate, steps=c.steps,
                       delta=c.delta, stability_constant=c.stability_constant, epsilon=self.dp.epsilon,
                       learning_rate=self.dp.learning_rate)
        return out


def train_models(cfg: ExperimentConfig, dataset: Dataset, workers: int = 1) -> TrainedModels:
    membership = build_split_plan(len(dataset), cfg.n_models, cfg.seed)
    mlp = cfg.mlp_config(dataset.dim, dataset.num_classes)
    dp_plan = plan_dp(cfg, len(dataset) // 2)
    init_seed = derive_seed(cfg.seed, TAG_INIT) if cfg.train.shared_init else None
    tasks = []
    for m in range(cfg.n_models):
        train = TrainConfig(cfg.train.learning_rate, cfg.train.epochs, cfg.train.minibatch_size,
                            derive_seed(cfg.seed, TAG_TRAIN, m), init_seed)
        tasks.append((m, dataset, membership.column(m), mlp, train, dp_plan))
    results = _fan_out(_train_one, tasks, workers)
    return TrainedModels([r[0] for r in results], membership, [r[1] for r in results], [r[2] for r in results],
                         dp_plan)


def collect_all_scores(cfg: ExperimentConfig, models: List[ModelParams], dataset: Dataset,
                       workers: int = 1) -> Dict[Tuple[Optional[Method], ScoreKind], ScoreMatrix]:
    kinds = list(dict.fromkeys(cfg.attack.kinds))
    methods = list(dict.fromkeys(cfg.attack.methods))
    tasks = [(p, dataset, methods, kinds, cfg.attack, derive_seed(cfg.seed, TAG_GS, m)) for m, p in enumerate(models)]
    cols = _fan_out(_score_one, tasks, workers)
    return {key: ScoreMatrix(np.column_stack([c[key] for c in cols]), key[1], key[0]) for key in cols[0]}


# ---------------------------------------------------------------- analysis

@dataclass
class AttackCell:
    attack: str
    method: str
    runs: List[RunMetrics]
    curves: List[RocCurve]
    degenerate: List[int]
    metrics: AttackMetrics = None

    def __post_init__(self):
        if self.metrics is None:
            self.metrics = aggregate(self.runs)

    @property
    def name(self) -> str:
        return f"{self.attack}/{self.method}"


@dataclass
class AttackReport:
    config: Dict
    cells: Dict[str, AttackCell]
    models: Dict = field(default_factory=dict)
    n_examples: int = 0
    version: str = __version__
    created: str = ""

    def to_dict(self) -> Dict:
        return {
            "version": self.version,
            "created": self.created,
            "config": self.config,
            "n_examples": self.n_examples,
            "models": self.models,
            "attacks": {
                name: {
                    "attack": c.attack,
                    "method": c.method,
                    **c.metrics.to_dict(),
                    "runs": [
                        {"target_model": i, "tpr_at_fpr_0.001": r.tpr_at_fpr_001, "tpr_at_fpr_0.01": r.tpr_at_fpr_01,
                         "auc": r.auc, "degenerate_examples": c.degenerate[i]}
                        for i, r in enumerate(c.runs)
                    ],
                }
                for name, c in sorted(self.cells.items())
            },
        }


def _cell_from_scores(attack, method, per_run_scores, membership, degenerate=None) -> AttackCell:
    curves = [roc_curve(s, membership.column(m)) for m, s in enumerate(per_run_scores)]
    return AttackCell(attack, method, [RunMetrics.from_curve(c) for c in curves], curves,
                      degenerate or [0] * len(curves))


def analyze(matrices: Dict, membership: MembershipMatrix, threshold_baseline: bool = True) -> Dict[str, AttackCell]:
    cells = {}
    for (method, kind), sm in sorted(matrices.items(), key=lambda kv: (kv[0][1].value, str(kv[0][0]))):
        label = NO_METHOD if method is None else Method(method).value
        runs = lira_runs(sm, membership)
        cell = _cell_from_scores(ATTACK_FOR_KIND[kind], label, [r.log_lambda for r in runs], membership,
                                 [int(r.degenerate.sum()) for r in runs])
        cells[cell.name] = cell
        if kind is ScoreKind.VARIANCE and threshold_baseline:
            thr = _cell_from_scores("threshold", label,
                                    [threshold_attack_scores(sm, m) for m in range(membership.n_models)], membership)
            cells[thr.name] = thr
    return cells


# ---------------------------------------------------------------- persistence

def write_manifest(out: Path, status: str, stage: str = "", error: str = "") -> None:
    artifacts = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "MANIFEST")
    lines = [f"status: {status}"]
    if stage:
        lines.append(f"failed_stage: {stage}")
    if error:
        lines.append(f"error: {error}")
    lines.append("artifacts:")
    lines += [f"  {a}" for a in artifacts]
    (out / "MANIFEST").write_text("\n".join(lines) + "\n")


def save_matrices(out: Path, membership: MembershipMatrix, matrices: Dict) -> None:
    io.save_matrix(out / "membership.csv", membership)
    for (method, kind), sm in matrices.items():
        io.save_matrix(out / io.score_filename(method, kind), sm)


def emit_report(report: AttackReport, out) -> None:
    """report.json plus linear and log-axis ROC point files for every run."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, cell in sorted(report.cells.items()):
        n_neg = max(1, report.n_examples // 2)
        for i, curve in enumerate(cell.curves):
            stem = f"{cell.attack}_{cell.method}_run{i}.csv"
            io.save_roc(out / f"roc_{stem}", curve)
            io.save_roc(out / f"roc_logaxis_{stem}", curve, fpr_floor=1.0 / n_neg)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ConfigError, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - tag and re-raise with the stage name
        raise StageError(name, exc) from exc


def _finish(out: Path, report: AttackReport) -> AttackReport:
    report.created = datetime.now(timezone.utc).isoformat(timespec="seconds")
    emit_report(report, out)
    write_manifest(out, "complete")
    return report


def _guarded(out: Path, body):
    out.mkdir(parents=True, exist_ok=True)
    try:
        return body()
    except StageError as exc:
        write_manifest(out, "incomplete", exc.stage, str(exc.cause))
        raise


def run_training(cfg: ExperimentConfig, out, workers: int = 1) -> TrainedModels:
    out = Path(out)

    def body():
        (out / "config.ini").write_text(dump_config(cfg))
        dataset = _stage("data", load_dataset, cfg)
        with threadpool_limits(limits=1):
            trained = _stage("train", train_models, cfg, dataset, workers)
        (out / "models").mkdir(exist_ok=True)
        for m, p in enumerate(trained.models):
            io.save_params(out / "models" / f"model_{m:03d}.npz", p)
        io.save_matrix(out / "membership.csv", trained.membership)
        (out / "training.json").write_text(json.dumps(trained.summary(), indent=2, sort_keys=True) + "\n")
        write_manifest(out, "trained")
        return trained

    return _guarded(out, body)


def run_attack(cfg: ExperimentConfig, out, workers: int = 1, trained: Optional[TrainedModels] = None) -> AttackReport:
    """Scores and attacks the models under ``out/models`` (or ``trained`` if given)."""
    out = Path(out)

    def body():
        dataset = _stage("data", load_dataset, cfg)
        if trained is None:
            models_info = json.loads((out / "training.json").read_text())
            models = [io.load_params(p) for p in sorted((out / "models").glob("model_*.npz"))]
            membership = io.load_membership(out / "membership.csv")
            if len(models) != membership.n_models:
                raise StageError("load", ValueError(f"{len(models)} models for {membership.n_models} columns"))
        else:
            models, membership, models_info = trained.models, trained.membership, trained.summary()
        with threadpool_limits(limits=1):
            matrices = _stage("scores", collect_all_scores, cfg, models, dataset, workers)
        save_matrices(out, membership, matrices)
        cells = _stage("attack", analyze, matrices, membership, cfg.attack.threshold_baseline)
        report = AttackReport(cfg.to_dict(), cells, models_info, len(dataset))
        return _stage("report", _finish, out, report)

    return _guarded(out, body)


def run_experiment(cfg: ExperimentConfig, out, workers: int = 1) -> AttackReport:
    trained = run_training(cfg, out, workers)
    return run_attack(cfg, out, workers, trained)


def replay(src, out=None) -> AttackReport:
    """Recomputes the report from persisted membership and score matrices alone."""
    src = Path(src)
    out = Path(out) if out is not None else src
    cfg = load_config(src / "config.ini")

    def body():
        def read():
            membership = io.load_membership(src / "membership.csv")
            matrices = {}
            for kind in dict.fromkeys(cfg.attack.kinds):
                methods = [None] if kind is ScoreKind.LOSS else list(dict.fromkeys(cfg.attack.methods))
                for method in methods:
                    matrices[(method, kind)] = io.load_scores(src / io.score_filename(method, kind), kind, method)
            return membership, matrices

        membership, matrices = _stage("load", read)
        models_path = src / "training.json"
        models_info = json.loads(models_path.read_text()) if models_path.exists() else {}
        cells = _stage("attack", analyze, matrices, membership, cfg.attack.threshold_baseline)
        report = AttackReport(cfg.to_dict(), cells, models_info, membership.n_examples)
        if out != src:
            (out / "config.ini").write_text(dump_config(cfg))
        return _stage("report", _finish, out, report)

    return _guarded(out, body)


def load_report(path) -> Dict:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    return json.loads(path.read_text())


def epsilon_label(eps: float) -> str:
    return "inf" if math.isinf(eps) else f"{eps:g}"
