"""Phase-wise mining of attack patterns from heterogeneous server logs.

Phase 1 clusters each log with (optionally federated, Paillier-encrypted)
fuzzy C-means, phase 2 groups the labelled events into transactions with
DBSCAN and phase 3 ranks the resulting item-set patterns by suspicion.
"""

__version__ = "0.1.0"
