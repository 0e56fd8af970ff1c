"""Fuzzy C-means with a data-driven fuzzifier and minimum-centroid-distance validation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

#: Replacement fuzzifier used whenever the formula yields m >= 2.
FUZZIFIER_CAP = 1.380229246586486

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITER = 300


@dataclass
class FuzzyModel:
    """Cluster centers plus the settings that produced them."""

    centers: np.ndarray
    fuzzifier_m: float
    k: int
    tolerance: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0
    n_iter: int = 0
    objective: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        if self.centers.ndim != 2 or self.centers.shape[0] != self.k:
            raise ValueError(f"centers must have shape (k, D), got {self.centers.shape} for k={self.k}")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not self.fuzzifier_m > 1:
            raise ValueError("fuzzifier m must be > 1")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("centers must be finite")

    def memberships(self, data) -> np.ndarray:
        return update_memberships(_as_matrix(data), self.centers, self.fuzzifier_m)

    def predict(self, data) -> np.ndarray:
        return hard_labels(self.memberships(data))

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "m": self.fuzzifier_m,
            "k": self.k,
            "tolerance": self.tolerance,
            "max_iter": self.max_iter,
            "seed": self.seed,
            "n_iter": self.n_iter,
            "objective": self.objective,
            **self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FuzzyModel":
        known = {"centers", "m", "k", "tolerance", "max_iter", "seed", "n_iter", "objective"}
        return cls(
            centers=np.asarray(d["centers"], dtype=float),
            fuzzifier_m=float(d["m"]),
            k=int(d["k"]),
            tolerance=float(d.get("tolerance", DEFAULT_TOLERANCE)),
            max_iter=int(d.get("max_iter", DEFAULT_MAX_ITER)),
            seed=int(d.get("seed", 0)),
            n_iter=int(d.get("n_iter", 0)),
            objective=float(d.get("objective", float("nan"))),
            meta={k: v for k, v in d.items() if k not in known},
        )


def _as_matrix(data) -> np.ndarray:
    values = getattr(data, "values", data)
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def compute_fuzzifier(n: int, d: int) -> float:
    """Fuzzifier from the number of entries ``n`` and dimensionality ``d``.

    Values of 2 or more, which the formula produces for small datasets,
    are replaced by :data:`FUZZIFIER_CAP`.
    """
    if n < 2 or d < 1:
        raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    m = (
        1.0
        + (1418.0 / n + 22.05) * d ** -2.0
        + (12.33 / n + 0.243) * d ** (-0.0406 * math.log(n) - 0.1134)
    )
    if m >= 2.0:
        return FUZZIFIER_CAP
    return m


def update_memberships(x: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    """Membership matrix (N x K) for fixed centers.

    A point lying exactly on a center belongs fully to it (the lowest
    index wins if several centers coincide with it).
    """
    dist = cdist(x, centers)
    n, k = dist.shape
    u = np.empty((n, k))
    zero = dist == 0.0
    hit = zero.any(axis=1)
    if hit.any():
        u[hit] = 0.0
        u[hit, np.argmax(zero[hit], axis=1)] = 1.0
    rest = ~hit
    if rest.any():
        # u_ij = d_ij^-p / sum_l d_il^-p, evaluated as a softmax for stability
        logits = -(2.0 / (m - 1.0)) * np.log(dist[rest])
        u[rest] = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    return u


def update_centers(x: np.ndarray, u: np.ndarray, m: float, previous: Optional[np.ndarray] = None) -> np.ndarray:
    """Weighted means of the data. A cluster whose weights have all
    underflowed to zero keeps its ``previous`` center, which leaves the
    objective unchanged."""
    um = u ** m
    weight = um.sum(axis=0)
    empty = weight == 0.0
    if not empty.any():
        return (um.T @ x) / weight[:, None]
    if previous is None:
        raise ValueError("a cluster has zero total membership")
    centers = np.array(previous, dtype=float, copy=True)
    centers[~empty] = (um[:, ~empty].T @ x) / weight[~empty, None]
    return centers


def objective(x: np.ndarray, u: np.ndarray, centers: np.ndarray, m: float) -> float:
    return float(np.sum((u ** m) * cdist(x, centers, "sqeuclidean")))


def hard_labels(u: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest index
    return np.argmax(u, axis=1)


def random_memberships(n: int, k: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.random((n, k))
    return u / u.sum(axis=1, keepdims=True)


def fcm_fit(
    data,
    k: int,
    m: float,
    seed: int = 0,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    init_centers: Optional[np.ndarray] = None,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray, float], None]] = None,
    check_objective: bool = False,
) -> tuple[FuzzyModel, np.ndarray]:
    """Fit fuzzy C-means.

    Starts either from a seeded random membership matrix or, when
    ``init_centers`` is given, from those centers. Iterates until the
    largest center displacement drops below ``tolerance`` or ``max_iter``
    updates have been made.

    ``callback(iteration, centers, memberships, objective)`` is invoked
    once per iteration with the memberships the centers were computed
    from. With ``check_objective`` an ``AssertionError`` is raised if the
    objective ever increases.

    Returns the model and the memberships for the final centers.
    """
    x = _as_matrix(data)
    n = x.shape[0]
    if n == 0 or x.shape[1] == 0:
        raise ValueError("empty data")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of rows ({n})")
    if k < 2:
        raise ValueError("k must be >= 2")
    if not m > 1:
        raise ValueError("fuzzifier m must be > 1")

    if init_centers is None:
        u = random_memberships(n, k, seed)
    else:
        init_centers = np.asarray(init_centers, dtype=float)
        if init_centers.shape != (k, x.shape[1]):
            raise ValueError(f"init_centers must have shape {(k, x.shape[1])}, got {init_centers.shape}")
        u = update_memberships(x, init_centers, m)
    centers = update_centers(x, u, m, init_centers)

    prev_obj = math.inf
    prev_centers = centers
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        obj = objective(x, u, centers, m)
        if check_objective and obj > prev_obj * (1 + 1e-12) + 1e-300:
            raise AssertionError(f"objective increased at iteration {n_iter}: {prev_obj} -> {obj}")
        if obj > prev_obj:
            # the exact updates cannot raise the objective; a rise of a few ulps
            # means rounding noise at a fixed point, so keep the previous step
            centers = prev_centers
            n_iter -= 1
            break
        if callback is not None:
            callback(n_iter, centers, u, obj)
        prev_obj, prev_centers = obj, centers
        u = update_memberships(x, centers, m)
        new_centers = update_centers(x, u, m, centers)
        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        if shift < tolerance:
            break

    u = update_memberships(x, centers, m)
    model = FuzzyModel(
        centers=centers,
        fuzzifier_m=float(m),
        k=k,
        tolerance=tolerance,
        max_iter=max_iter,
        seed=int(seed) if seed is not None else 0,
        n_iter=n_iter,
        objective=objective(x, u, centers, m),
    )
    return model, u


def mcd(centers) -> float:
    """Minimum squared Euclidean distance between any two distinct centers."""
    c = np.asarray(centers, dtype=float)
    if c.ndim != 2 or c.shape[0] < 2:
        raise ValueError("mcd needs at least two centers")
    d = cdist(c, c, "sqeuclidean")
    iu = np.triu_indices(c.shape[0], k=1)
    return float(d[iu].min())


def largest_drop(curve: Sequence[float], k_min: int = 2) -> int:
    """Cluster count just before the largest fall of the validity curve.

    ``curve[i]`` is the value for ``k_min + i`` clusters; ties resolve to
    the smallest k.
    """
    values = np.asarray(curve, dtype=float)
    if values.size < 2:
        raise ValueError("need the curve at two or more cluster counts")
    drops = values[:-1] - values[1:]
    return k_min + int(np.argmax(drops))


def derive_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


def candidate_range(n: int) -> range:
    k_max = math.isqrt(n)
    if k_max < 3:
        raise ValueError(f"need at least 9 rows to choose a cluster count, got {n}")
    return range(2, k_max + 1)


def select_cluster_count(
    data,
    m: float,
    seed: int = 0,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    n_jobs: int = 1,
) -> tuple[int, list[float]]:
    """Sweep k over 2..floor(sqrt(N)) and pick k by the largest MCD drop.

    Each k is fitted once with a seed derived from ``seed`` and k, so a
    parallel sweep (``n_jobs > 1``) gives the same answer as a serial one.

    Returns
    -------
    k_star : int
    curve : list of float
        MCD value for each k in the sweep, starting at k=2.
    """
    x = _as_matrix(data)
    ks = candidate_range(x.shape[0])

    def one(k):
        model, _ = fcm_fit(x, k, m, seed=derive_seed(seed, k), tolerance=tolerance, max_iter=max_iter)
        return mcd(model.centers)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            curve = list(pool.map(one, ks))
    else:
        curve = [one(k) for k in ks]
    return largest_drop(curve, ks.start), curve
