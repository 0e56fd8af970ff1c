"""External cluster-quality scores against reference labels."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from sklearn import metrics as skm


class ClusterScores(NamedTuple):
    homog: float
    comp: float
    v_m: float
    ari: float
    ami: float

    def as_percent(self) -> dict:
        return {name: round(100 * value, 2) for name, value in self._asdict().items()}


def same_partition(a: Sequence, b: Sequence) -> bool:
    """True when the two labelings group the points identically."""
    a = np.asarray(a)
    b = np.asarray(b)
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    pairs = np.unique(np.stack([ia.ravel(), ib.ravel()]), axis=1)
    return pairs.shape[1] == ia.max(initial=-1) + 1 == ib.max(initial=-1) + 1


def metrics(true_labels: Sequence, pred_labels: Sequence) -> ClusterScores:
    """Homogeneity, completeness, V-measure, ARI and AMI.

    AMI uses the arithmetic-mean normaliser with the expected mutual
    information under the permutation model. Identical partitions score
    exactly 1.0 on all five.
    """
    t = np.asarray(true_labels)
    p = np.asarray(pred_labels)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"label arrays must be 1-D with equal length, got {t.shape} and {p.shape}")
    if t.size == 0:
        raise ValueError("need at least one label")
    if same_partition(t, p):
        return ClusterScores(1.0, 1.0, 1.0, 1.0, 1.0)
    h, c, v = skm.homogeneity_completeness_v_measure(t, p)
    return ClusterScores(
        float(h), float(c), float(v),
        float(skm.adjusted_rand_score(t, p)),
        float(skm.adjusted_mutual_info_score(t, p, average_method="arithmetic")),
    )
