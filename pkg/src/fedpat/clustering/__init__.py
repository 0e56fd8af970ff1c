"""Log-event clustering: fuzzy C-means, DBSCAN and quality metrics."""

from .density import DbscanParams, dbscan, k_distances, knee_eps
from .fcm import (
    FUZZIFIER_CAP,
    FuzzyModel,
    compute_fuzzifier,
    fcm_fit,
    hard_labels,
    largest_drop,
    mcd,
    select_cluster_count,
)
from .metrics import ClusterScores, metrics

__all__ = [
    "FUZZIFIER_CAP", "FuzzyModel", "compute_fuzzifier", "fcm_fit", "hard_labels", "largest_drop",
    "mcd", "select_cluster_count", "DbscanParams", "dbscan", "k_distances", "knee_eps",
    "ClusterScores", "metrics",
]
