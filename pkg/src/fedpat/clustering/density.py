"""DBSCAN and the k-distance epsilon heuristic used to build transactions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.cluster import DBSCAN


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = 2

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ValueError(f"eps must be finite and positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


def _matrix(data) -> np.ndarray:
    x = np.asarray(getattr(data, "values", data), dtype=float)
    return x[:, None] if x.ndim == 1 else x


def dbscan(data, params: DbscanParams) -> np.ndarray:
    """Label points with DBSCAN; -1 marks noise.

    Neighbourhoods are closed Euclidean balls that include the point
    itself, so a point is core when at least ``min_pts`` points (itself
    included) lie within ``eps``. Cluster ids are 0..C-1 in the order the
    clusters are discovered scanning rows from the top.
    """
    x = _matrix(data)
    if x.shape[0] == 0:
        return np.empty(0, dtype=int)
    labels = DBSCAN(eps=params.eps, min_samples=params.min_pts, metric="euclidean").fit_predict(x)
    return labels.astype(int)


def k_distances(data, k: int = 2) -> np.ndarray:
    """Distance from each row to its k-th nearest other row."""
    x = _matrix(data)
    if x.shape[0] <= k:
        raise ValueError(f"need more than k={k} rows, got {x.shape[0]}")
    dist, _ = cKDTree(x).query(x, k=k + 1)
    # column 0 is the point itself
    return dist[:, k]


def knee_eps(data, k: int = 2) -> float:
    """Epsilon for DBSCAN from the k-distance distribution.

    Duplicate rows are dropped first. If every k-distance is the same value
    d, returns d / 2; otherwise the mean of the distinct k-distances.
    """
    x = np.unique(_matrix(data), axis=0)
    if x.shape[0] < 2:
        raise ValueError("knee_eps needs at least two distinct rows")
    kk = min(k, x.shape[0] - 1)
    unique = np.unique(k_distances(x, kk))
    if unique.size == 1:
        return float(unique[0] / 2)
    return float(unique.mean())
