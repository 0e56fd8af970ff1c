"""Reference implementations written from the textbook definitions.

They are deliberately slow and share no code with the package, so the
tests compare two independent routes to the same numbers.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from functools import lru_cache

import mpmath


# --------------------------------------------------------------------------
# labelings

def set_partitions(n: int):
    """Every labeling of n points up to renaming (restricted growth strings)."""
    if n == 0:
        yield ()
        return

    def grow(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(top + 2):
            yield from grow(prefix + [v], max(top, v))

    yield from grow([0], 0)


def canonical(labels) -> tuple:
    """Rename labels in order of first appearance."""
    names: dict = {}
    return tuple(names.setdefault(v, len(names)) for v in labels)


# --------------------------------------------------------------------------
# cluster-quality scores

def _entropy(counts, n) -> float:
    return -sum(c / n * math.log(c / n) for c in counts if c)


def _conditional_entropy(joint: Counter, given: Counter, n: int) -> float:
    # H(X | Y) = -sum p(x, y) log p(x, y) / p(y), keys of joint are (x, y)
    return -sum(c / n * math.log(c / given[y]) for (x, y), c in joint.items())


def homogeneity_completeness_v(true, pred) -> tuple[float, float, float]:
    n = len(true)
    a, b = Counter(true), Counter(pred)
    joint_tp = Counter(zip(true, pred))
    joint_pt = Counter(zip(pred, true))
    h_c, h_k = _entropy(a.values(), n), _entropy(b.values(), n)
    h_c_given_k = _conditional_entropy(joint_tp, b, n)
    h_k_given_c = _conditional_entropy(joint_pt, a, n)
    homog = 1.0 if h_c == 0 else 1.0 - h_c_given_k / h_c
    comp = 1.0 if h_k == 0 else 1.0 - h_k_given_c / h_k
    v = 0.0 if homog + comp == 0 else 2 * homog * comp / (homog + comp)
    return homog, comp, v


def adjusted_rand(true, pred) -> float:
    """Hubert-Arabie ARI from an explicit enumeration of point pairs."""
    n11 = n10 = n01 = n00 = 0
    for i, j in itertools.combinations(range(len(true)), 2):
        st, sp = true[i] == true[j], pred[i] == pred[j]
        if st and sp:
            n11 += 1
        elif st:
            n10 += 1
        elif sp:
            n01 += 1
        else:
            n00 += 1
    if n10 == 0 and n01 == 0:
        return 1.0
    return 2.0 * (n00 * n11 - n01 * n10) / ((n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11))


def mutual_information(true, pred) -> float:
    n = len(true)
    a, b = Counter(true), Counter(pred)
    return sum(c / n * math.log(n * c / (a[x] * b[y])) for (x, y), c in Counter(zip(true, pred)).items())


@lru_cache(maxsize=None)
def _emi(rows: tuple, cols: tuple) -> float:
    # expected MI under the hypergeometric (fixed-marginals permutation) model
    n = sum(rows)
    total = 0.0
    for ai in rows:
        for bj in cols:
            for nij in range(max(1, ai + bj - n), min(ai, bj) + 1):
                prob = math.comb(ai, nij) * math.comb(n - ai, bj - nij) / math.comb(n, bj)
                total += prob * nij / n * math.log(n * nij / (ai * bj))
    return total


def expected_mutual_information(true, pred) -> float:
    return _emi(tuple(sorted(Counter(true).values())), tuple(sorted(Counter(pred).values())))


def adjusted_mutual_info(true, pred) -> float:
    n = len(true)
    a, b = Counter(true), Counter(pred)
    if len(a) == len(b) == 1:
        return 1.0
    mi = mutual_information(true, pred)
    emi = expected_mutual_information(true, pred)
    norm = (_entropy(a.values(), n) + _entropy(b.values(), n)) / 2
    return (mi - emi) / (norm - emi)


def all_scores(true, pred) -> tuple[float, float, float, float, float]:
    if canonical(true) == canonical(pred):
        return 1.0, 1.0, 1.0, 1.0, 1.0
    h, c, v = homogeneity_completeness_v(true, pred)
    return h, c, v, adjusted_rand(true, pred), adjusted_mutual_info(true, pred)


# --------------------------------------------------------------------------
# density clustering

def brute_dbscan(points, eps: float, min_pts: int) -> list[int]:
    """DBSCAN by direct reachability closure over the full distance table.

    Neighborhoods are closed balls that contain the point itself. Clusters
    are grown from unlabelled core points in index order; a border point
    joins the first cluster that reaches it.
    """
    n = len(points)
    near = [[j for j in range(n) if math.dist(points[i], points[j]) <= eps] for i in range(n)]
    core = [len(near[i]) >= min_pts for i in range(n)]
    labels = [-1] * n
    cid = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = cid
        frontier = [i]
        while frontier:
            p = frontier.pop()
            for q in near[p]:
                if labels[q] == -1:
                    labels[q] = cid
                    if core[q]:
                        frontier.append(q)
        cid += 1
    return labels


def knee_by_enumeration(points, k: int) -> float:
    """Mean of the unique k-th nearest-neighbour distances, or half of the
    only one, from a full pairwise table of the distinct points."""
    uniq = sorted(set(map(tuple, points)))
    kd = []
    for p in uniq:
        d = sorted(math.dist(p, q) for q in uniq if q != p)
        kd.append(d[min(k, len(d)) - 1])
    values = sorted(set(kd))
    return values[0] / 2 if len(values) == 1 else sum(values) / len(values)


# --------------------------------------------------------------------------
# fuzzifier and fuzzy C-means

def fuzzifier_mp(n: int, d: int, digits: int = 50):
    """The fuzzifier formula at high precision (uncapped)."""
    with mpmath.workdps(digits):
        N, D = mpmath.mpf(n), mpmath.mpf(d)
        return (1 + (1418 / N + mpmath.mpf("22.05")) * D ** -2
                + (mpmath.mpf("12.33") / N + mpmath.mpf("0.243")) * D ** (mpmath.mpf("-0.0406") * mpmath.log(N)
                                                                            - mpmath.mpf("0.1134")))


def plain_fcm_1d(xs, centers, m: float, iters: int = 2000):
    """Textbook fuzzy C-means on scalars with explicit loops."""
    c = list(centers)
    for _ in range(iters):
        u = []
        for x in xs:
            d = [abs(x - cj) for cj in c]
            if 0.0 in d:
                row = [1.0 if j == d.index(0.0) else 0.0 for j in range(len(c))]
            else:
                row = [1.0 / sum((d[j] / d[l]) ** (2 / (m - 1)) for l in range(len(c))) for j in range(len(c))]
            u.append(row)
        c = [sum(u[i][j] ** m * xs[i] for i in range(len(xs))) / sum(u[i][j] ** m for i in range(len(xs)))
             for j in range(len(c))]
    return c


# --------------------------------------------------------------------------
# Paillier by the modular-arithmetic definitions

def paillier_encrypt(n: int, m: int, r: int) -> int:
    n2 = n * n
    return pow(n + 1, m, n2) * pow(r, n, n2) % n2


def paillier_decrypt(p: int, q: int, c: int) -> int:
    n = p * q
    lam = math.lcm(p - 1, q - 1)
    u = pow(c, lam, n * n)
    l_value = (u - 1) // n
    return l_value * pow(lam, -1, n) % n
