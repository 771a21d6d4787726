"""Empirical (conditional) mutual information between discrete columns, in nats."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .tabular import Dataset


def _require_rows(dataset: Dataset) -> None:
    if dataset.n == 0:
        raise DataError("mutual information needs a non-empty dataset")


def joint_counts(dataset: Dataset, i: int, j: int | None = None) -> np.ndarray:
    """Count tensor of shape ``(|A_i|, |Y|)`` or ``(|A_i|, |A_j|, |Y|)``."""
    sizes = dataset.alphabet_sizes
    ny = dataset.num_labels
    if j is None:
        flat = dataset.X[:, i] * ny + dataset.y
        return np.bincount(flat, minlength=sizes[i] * ny).reshape(sizes[i], ny)
    flat = (dataset.X[:, i] * sizes[j] + dataset.X[:, j]) * ny + dataset.y
    return np.bincount(flat, minlength=sizes[i] * sizes[j] * ny).reshape(sizes[i], sizes[j], ny)


def _mi_from_counts(counts: np.ndarray) -> float:
    n = counts.sum()
    px = counts.sum(axis=1, keepdims=True)
    py = counts.sum(axis=0, keepdims=True)
    nz = counts > 0
    c = counts[nz].astype(np.float64)
    ratio = c * n / (px * py)[nz]
    return float(np.sum(c * np.log(ratio)) / n)


def _cmi_from_counts(counts: np.ndarray) -> float:
    # counts[a, b, y]; CMI = sum n_aby/N * ln(n_aby * n_y / (n_ay * n_by))
    n = counts.sum()
    n_y = counts.sum(axis=(0, 1))[None, None, :]
    n_ay = counts.sum(axis=1)[:, None, :]
    n_by = counts.sum(axis=0)[None, :, :]
    nz = counts > 0
    c = counts[nz].astype(np.float64)
    ratio = c * np.broadcast_to(n_y, counts.shape)[nz] / (n_ay * n_by)[nz]
    return float(np.sum(c * np.log(ratio)) / n)


def mutual_information(dataset: Dataset, feature: int) -> float:
    """MI(X_feature; y) from plain empirical frequencies."""
    _require_rows(dataset)
    return max(_mi_from_counts(joint_counts(dataset, feature)), 0.0)


def conditional_mutual_information(dataset: Dataset, i: int, j: int) -> float:
    """MI(X_i; X_j | y). Symmetric: the pair is canonicalized to ``(min, max)``."""
    if i == j:
        raise DataError("conditional mutual information needs two distinct features")
    _require_rows(dataset)
    a, b = min(i, j), max(i, j)
    return max(_cmi_from_counts(joint_counts(dataset, a, b)), 0.0)


def mi_vector(dataset: Dataset) -> np.ndarray:
    return np.array([mutual_information(dataset, i) for i in range(dataset.m)])


def cmi_matrix(dataset: Dataset) -> np.ndarray:
    """Symmetric ``m x m`` CMI matrix with a zero diagonal."""
    m = dataset.m
    out = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            out[a, b] = out[b, a] = conditional_mutual_information(dataset, a, b)
    return out
