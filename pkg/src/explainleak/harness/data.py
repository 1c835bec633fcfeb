"""Dataset sources: synthetic Gaussian blobs and standardized CSV files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..modelkit import Dataset

STD_FLOOR = 1e-12


def gen_synthetic_blobs(n: int, d: int, k: int, separation: float, seed: int) -> Dataset:
    """Balanced classes with unit within-class std.

    Class means are ``separation / sqrt(2)`` times orthonormal random
    directions, so every pair of means sits exactly ``separation`` apart.
    """
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    if k < 2 or d < 2:
        raise ValueError(f"need k >= 2 and d >= 2, got k={k}, d={d}")
    if k > d:
        raise ValueError(f"orthogonal class directions need k <= d, got k={k}, d={d}")
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    means = (separation / np.sqrt(2.0)) * q.T
    y = rng.permutation(np.arange(n) % k)
    X = means[y] + rng.standard_normal((n, d))
    return Dataset(X, y, k)


def standardize(X: np.ndarray) -> np.ndarray:
    std = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(std < STD_FLOOR, 1.0, std)


def load_csv(path, label_column: str = "label", standardize_features: bool = True) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if label_column not in header:
            raise ValueError(f"{path}: missing label column {label_column!r} (have {header})")
        li = header.index(label_column)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            feats = []
            for ci, cell in enumerate(row):
                if ci == li:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric cell {cell!r} in column {header[ci]!r}") from None
            rows.append(feats)
            labels.append(row[li].strip())
    if not rows:
        raise ValueError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite feature values")
    try:
        y = np.array([int(v) for v in labels])
    except ValueError:
        codes = {v: i for i, v in enumerate(sorted(set(labels)))}
        y = np.array([codes[v] for v in labels])
    if y.min() < 0:
        raise ValueError(f"{path}: negative class label")
    if standardize_features:
        X = standardize(X)
    return Dataset(X, y, int(y.max()) + 1)


def save_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(dataset.dim)] + [label_column])
        for xi, yi in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in xi] + [int(yi)])
