"""On-disk formats: score/membership matrices, model parameters, ROC point files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Union

import numpy as np

from ..attackkit import MembershipMatrix, ScoreMatrix
from ..evalkit import RocCurve
from ..explainkit import Method, ScoreKind
from ..numcore import MlpConfig, ModelParams

Matrix = Union[ScoreMatrix, MembershipMatrix]


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def save_matrix(path, matrix: Matrix) -> None:
    """``example_id,m0,m1,...`` header; scores at 17 significant digits, flags as 0/1."""
    path = Path(path)
    if isinstance(matrix, MembershipMatrix):
        data, fmt = matrix.flags, str
    else:
        data, fmt = matrix.scores, _fmt
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example_id"] + [f"m{j}" for j in range(data.shape[1])])
        for i, row in enumerate(data):
            w.writerow([i] + [fmt(v) for v in row.tolist()])


def _read_grid(path) -> np.ndarray:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from None
    if not rows or not rows[0] or rows[0][0] != "example_id":
        raise ValueError(f"{path}: missing 'example_id,m0,...' header")
    n_cols = len(rows[0]) - 1
    if n_cols < 1 or rows[0][1:] != [f"m{j}" for j in range(n_cols)]:
        raise ValueError(f"{path}: malformed model columns in header")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols + 1:
            raise ValueError(f"{path}:{lineno}: expected {n_cols + 1} cells, got {len(row)}")
        if row[0] != str(lineno - 2):
            raise ValueError(f"{path}:{lineno}: example_id {row[0]!r} out of sequence")
        try:
            values.append([float(c) for c in row[1:]])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
    return np.array(values, dtype=np.float64).reshape(len(values), n_cols)


def load_scores(path, kind: ScoreKind, method=None) -> ScoreMatrix:
    return ScoreMatrix(_read_grid(path), kind, method)


def load_membership(path) -> MembershipMatrix:
    grid = _read_grid(path)
    if not np.isin(grid, (0.0, 1.0)).all():
        raise ValueError(f"{path}: membership entries must be 0 or 1")
    return MembershipMatrix(grid.astype(np.int8))


def load_matrix(path, like: str, kind: ScoreKind = None, method=None) -> Matrix:
    if like == "membership":
        return load_membership(path)
    return load_scores(path, kind, method)


def score_filename(method, kind: ScoreKind) -> str:
    kind = ScoreKind(kind)
    if kind is ScoreKind.LOSS:
        return "scores_loss.csv"
    return f"scores_{Method(method).value}_{kind.value}.csv"


# ---------------------------------------------------------------- params

def save_params(path, params: ModelParams) -> None:
    arrays = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    cfg = params.config
    arrays["config"] = np.array(json.dumps({"input_dim": cfg.input_dim, "hidden_sizes": list(cfg.hidden_sizes),
                                            "num_classes": cfg.num_classes}))
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_params(path) -> ModelParams:
    with np.load(path) as z:
        cfg = json.loads(str(z["config"]))
        config = MlpConfig(cfg["input_dim"], tuple(cfg["hidden_sizes"]), cfg["num_classes"])
        n_layers = len(config.layer_sizes) - 1
        return ModelParams([z[f"W{i}"] for i in range(n_layers)], [z[f"b{i}"] for i in range(n_layers)], config)


# ---------------------------------------------------------------- ROC files

def save_roc(path, curve: RocCurve, fpr_floor: float = 0.0) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for f, t in zip(curve.fpr.tolist(), curve.tpr.tolist()):
            w.writerow([_fmt(max(f, fpr_floor)), _fmt(t)])


def load_roc(path) -> RocCurve:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["fpr", "tpr"]:
        raise ValueError(f"{path}: expected 'fpr,tpr' header")
    arr = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return RocCurve(arr[:, 0], arr[:, 1])
