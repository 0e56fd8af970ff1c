import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from fedpat.clustering.density import DbscanParams, dbscan, k_distances, knee_eps
from fedpat.clustering.metrics import metrics


def test_two_pairs_two_clusters():
    x = np.array([[0, 0], [0.1, 0], [10, 0], [10.1, 0]])
    assert dbscan(x, DbscanParams(eps=0.5, min_pts=2)).tolist() == [0, 0, 1, 1]


def test_single_point_is_noise():
    assert dbscan(np.array([[1.0, 2.0]]), DbscanParams(eps=1.0, min_pts=2)).tolist() == [-1]


def test_neighbourhood_is_closed():
    x = np.array([[0.0], [0.5]])
    assert dbscan(x, DbscanParams(eps=0.5, min_pts=2)).tolist() == [0, 0]


@pytest.mark.parametrize("kw", [dict(eps=0), dict(eps=-1), dict(eps=1, min_pts=0)])
def test_params_validated(kw):
    with pytest.raises(ValueError):
        DbscanParams(**kw)


@pytest.mark.parametrize("seed", range(20))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    x = rng.random((30, 2))
    eps = rng.uniform(0.05, 0.2)
    min_pts = int(rng.integers(2, 5))
    got = dbscan(x, DbscanParams(eps, min_pts))
    assert got.tolist() == oracles.brute_dbscan(x.tolist(), eps, min_pts)


def test_knee_example():
    x = np.array([[0.0], [1.0], [2.0], [4.0]])
    assert k_distances(x, 2).tolist() == [2.0, 1.0, 2.0, 3.0]
    assert knee_eps(x, 2) == 2.0


def test_knee_single_distance_halved():
    x = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    assert knee_eps(x, 1) == 0.5


def test_knee_needs_two_distinct_rows():
    with pytest.raises(ValueError):
        knee_eps(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_knee_on_two_points_clamps_k():
    assert knee_eps(np.array([[0.0], [3.0]]), 2) == 1.5


pts = arrays(float, st.tuples(st.integers(3, 25), st.just(2)), elements=st.integers(0, 20).map(float))


@given(pts, st.integers(1, 4), st.randoms(use_true_random=False))
def test_knee_matches_enumeration_and_ignores_duplicates_and_order(x, k, rnd):
    if len(np.unique(x, axis=0)) < 2:
        return
    expected = oracles.knee_by_enumeration(x.tolist(), k)
    assert knee_eps(x, k) == pytest.approx(expected, rel=1e-12)
    doubled = np.concatenate([x, x[: len(x) // 2]])
    perm = list(range(len(doubled)))
    rnd.shuffle(perm)
    assert knee_eps(doubled[perm], k) == pytest.approx(expected, rel=1e-12)


@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_dbscan_permutation_invariant(seed, rnd):
    rng = np.random.default_rng(seed)
    x = rng.random((25, 2))
    params = DbscanParams(0.15, 3)
    perm = list(range(25))
    rnd.shuffle(perm)
    a = dbscan(x, params)
    b = np.empty(25, dtype=int)
    b[perm] = dbscan(x[perm], params)
    core = np.array([np.sum(np.linalg.norm(x - p, axis=1) <= 0.15) >= 3 for p in x])
    # border points may switch between adjacent clusters; cores and noise may not
    assert metrics(a[core], b[core]).ari == 1.0 if core.any() else True
    assert ((a == -1) == (b == -1)).all()
