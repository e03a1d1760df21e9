"""Greedy CUR selection of columns (symmetry functions) and rows (configurations).

Each step scores the columns of the current residual matrix by their weight
in the top-k right singular vectors, picks the best one, and projects it out
of every remaining column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .descriptors import DescriptorSet, compute_descriptors


@dataclass(frozen=True)
class SelectionResult:
    indices: tuple
    errors: tuple  # relative CUR error after each pick
    k: int
    exhausted: bool = False
    tags: Optional[tuple] = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pick_order", "index", "tag", "epsilon_after"])
            for order, (i, eps) in enumerate(zip(self.indices, self.errors)):
                tag = self.tags[i] if self.tags is not None else i
                w.writerow([order, i, tag, repr(float(eps))])


def pinv(a: np.ndarray) -> np.ndarray:
    """SVD pseudoinverse with cutoff max(M, N) * sigma_max * 1e-12."""
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(a.shape[::-1])
    tol = max(a.shape) * s[0] * 1e-12
    inv = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def importance_scores(x: np.ndarray, k: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= min(x.shape):
        raise ValueError(f"k={k} outside [1, {min(x.shape)}]")
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    return np.sum(vt[:k] ** 2, axis=0)


def orthogonalize_against(x: np.ndarray, pivot: int) -> np.ndarray:
    """Remove the pivot column's direction from all columns; pivot becomes zero."""
    x = np.array(x, dtype=float)
    col = x[:, pivot].copy()
    norm2 = col @ col
    if norm2 == 0:
        raise ValueError(f"pivot column {pivot} has zero norm")
    x -= np.outer(col, col @ x) / norm2
    x[:, pivot] = 0.0
    return x


def cur_error(x: np.ndarray, cols: Sequence[int], rows: Sequence[int]) -> float:
    """||X - C U R||_F / ||X||_F with U = C^+ X R^+; 1 for an empty selection."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x)
    if norm == 0:
        raise ValueError("zero matrix")
    cols, rows = list(cols), list(rows)
    if not cols or not rows:
        return 1.0
    c = x[:, cols]
    r = x[rows, :]
    u = pinv(c) @ x @ pinv(r)
    return float(np.linalg.norm(x - c @ u @ r) / norm)


def _column_error(x, cols):
    # all rows kept: the error reduces to projecting X on span(C)
    return cur_error(x, cols, range(x.shape[0]))


def select_columns(x: np.ndarray, n_target: int, k: int = 1,
                   epsilon_stop: Optional[float] = None,
                   tags: Optional[Sequence] = None) -> SelectionResult:
    x = np.asarray(x, dtype=float)
    n_cols = x.shape[1]
    if not 0 <= n_target <= n_cols:
        raise ValueError(f"n_target={n_target} exceeds {n_cols} columns")
    if tags is not None and len(set(tags)) != len(tags):
        raise ValueError("tags must be unique")
    resid = x.copy()
    picked, errors = [], []
    exhausted = False
    scale = np.linalg.norm(x)
    while len(picked) < n_target:
        if np.linalg.norm(resid) <= 1e-13 * scale:
            exhausted = True
            break
        kk = min(k, min(resid.shape))
        scores = importance_scores(resid, kk)
        scores[picked] = -1.0
        # ties (within round-off) go to the lowest index
        best = int(np.flatnonzero(scores >= scores.max() - 1e-12)[0])
        if np.linalg.norm(resid[:, best]) == 0:
            exhausted = True
            break
        picked.append(best)
        resid = orthogonalize_against(resid, best)
        errors.append(_column_error(x, picked))
        if epsilon_stop is not None and errors[-1] < epsilon_stop:
            break
    return SelectionResult(tuple(picked), tuple(errors), k, exhausted,
                           None if tags is None else tuple(tags))


def select_rows(x: np.ndarray, n_target: int, k: int = 1,
                epsilon_stop: Optional[float] = None,
                tags: Optional[Sequence] = None) -> SelectionResult:
    return select_columns(np.asarray(x).T, n_target, k, epsilon_stop, tags)


def feature_matrix(dataset: Dataset, descriptor_set: DescriptorSet, element: str,
                   scaled: bool = True) -> np.ndarray:
    """Rows are atoms of ``element`` across the dataset, columns its functions."""
    rows = []
    for s in dataset:
        out = compute_descriptors(s, descriptor_set, scaled=scaled, gradients=False)
        if element in out.values:
            rows.append(out.values[element])
    if not rows:
        raise ValueError(f"element {element} absent from dataset")
    return np.vstack(rows)


def structure_matrix(dataset: Dataset, descriptor_set: DescriptorSet,
                     scaled: bool = True) -> np.ndarray:
    """One row per structure: per-element descriptor sums, concatenated."""
    rows = []
    for s in dataset:
        out = compute_descriptors(s, descriptor_set, scaled=scaled, gradients=False)
        rows.append(np.concatenate([out.values[e].sum(0) for e in descriptor_set.elements]))
    return np.array(rows)
