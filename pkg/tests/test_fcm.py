import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from conftest import minmax, pentagon_blobs
from fedpat.clustering.fcm import (
    FUZZIFIER_CAP,
    FuzzyModel,
    candidate_range,
    compute_fuzzifier,
    derive_seed,
    fcm_fit,
    hard_labels,
    largest_drop,
    mcd,
    select_cluster_count,
    update_centers,
    update_memberships,
)

# Validity curves read off the two published example plots (k = 2..20).
FIG_A = [4, 3.5, 3, 2.9, 2.0, 1.9, 1.7, 1.75, 1.7, 1.5, 1.48, 1.6, 1.6, 0.9, 0.85, 0.9, 1.5, 1.4, 1.3]
FIG_B = [2.9, 2.6, 2.5, 2.7, 3, 3, 2.5, 2.5, 2.6, 1.5, 1.3, 1.1, 1.0, 0.9, 0.85, 1.0, 0.9, 0.5, 1.0]


def test_fuzzifier_large_dataset():
    assert compute_fuzzifier(1000, 10) == pytest.approx(float(oracles.fuzzifier_mp(1000, 10)), abs=1e-12)
    assert compute_fuzzifier(1000, 10) == pytest.approx(1.3378, abs=5e-5)


def test_fuzzifier_cap_for_tiny_logs():
    assert oracles.fuzzifier_mp(30, 2) >= 2
    assert compute_fuzzifier(30, 2) == FUZZIFIER_CAP == 1.380229246586486


def test_fuzzifier_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        compute_fuzzifier(1, 3)
    with pytest.raises(ValueError):
        compute_fuzzifier(10, 0)


def test_one_dimensional_example():
    x = np.array([[0.0], [0.1], [0.9], [1.0]])
    model, u = fcm_fit(x, 2, 2.0, seed=0, tolerance=1e-12, max_iter=1000)
    got = np.sort(model.centers.ravel())
    ref = np.sort(oracles.plain_fcm_1d([0.0, 0.1, 0.9, 1.0], [0.3, 0.6], 2.0))
    np.testing.assert_allclose(got, ref, atol=1e-9)
    assert got == pytest.approx([0.05, 0.95], abs=0.01)


def test_mcd_example():
    assert mcd([[0, 0], [3, 4], [10, 0]]) == 25.0


def test_largest_drop_on_published_curves():
    assert largest_drop(FIG_A) == 5
    assert largest_drop(FIG_B) == 10


def test_largest_drop_ties_to_smallest_k():
    assert largest_drop([3, 2, 2, 1]) == 2


def test_three_blobs_select_three():
    x, _ = pentagon_blobs(0, n=300, k=3, sep=6.0)
    k, curve = select_cluster_count(x, FUZZIFIER_CAP, seed=1)
    assert k == 3
    assert len(curve) == len(candidate_range(300)) == 16


def test_parallel_sweep_matches_serial():
    x = minmax(pentagon_blobs(3, n=120)[0])
    assert select_cluster_count(x, 1.4, seed=5) == select_cluster_count(x, 1.4, seed=5, n_jobs=4)


def test_candidate_range_needs_nine_rows():
    assert candidate_range(9) == range(2, 4)
    with pytest.raises(ValueError):
        candidate_range(8)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 3) == derive_seed(0, 3)
    assert len({derive_seed(0, k) for k in range(2, 30)}) == 28


def test_fit_is_bit_reproducible():
    x = np.random.default_rng(2).random((60, 3))
    a, ua = fcm_fit(x, 4, 1.6, seed=9)
    b, ub = fcm_fit(x, 4, 1.6, seed=9)
    assert a.centers.tobytes() == b.centers.tobytes() and ua.tobytes() == ub.tobytes()


def test_fit_errors():
    x = np.random.default_rng(0).random((5, 2))
    with pytest.raises(ValueError):
        fcm_fit(x, 6, 1.5)
    with pytest.raises(ValueError):
        fcm_fit(x, 1, 1.5)
    with pytest.raises(ValueError):
        fcm_fit(x, 2, 1.0)
    with pytest.raises(ValueError):
        fcm_fit(np.empty((0, 2)), 2, 1.5)


def test_point_on_center_gets_full_membership():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5]])
    u = update_memberships(x, np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]]), 1.5)
    np.testing.assert_array_equal(u[0], [0, 0, 1])
    np.testing.assert_array_equal(u[1], [1, 0, 0])
    np.testing.assert_allclose(u[2].sum(), 1.0)


def test_argmax_ties_go_to_lowest_index():
    assert hard_labels(np.array([[0.5, 0.5], [0.2, 0.8]])).tolist() == [0, 1]


def test_empty_cluster_keeps_its_center():
    x = np.array([[0.0], [0.0], [0.0]])
    u = np.array([[1.0, 0.0]] * 3)
    prev = np.array([[5.0], [7.0]])
    np.testing.assert_array_equal(update_centers(x, u, 1.5, prev), [[0.0], [7.0]])
    with pytest.raises(ValueError):
        update_centers(x, u, 1.5)


def test_duplicate_heavy_data_stays_finite():
    x = np.repeat(np.eye(3), [20, 1, 1], axis=0)
    model, u = fcm_fit(x, 3, FUZZIFIER_CAP, seed=0)
    assert np.isfinite(model.centers).all() and np.allclose(u.sum(axis=1), 1.0)


def test_model_roundtrip():
    x = np.random.default_rng(1).random((30, 2))
    model, _ = fcm_fit(x, 3, 1.5, seed=2)
    model.meta["column_meta_hash"] = "abc"
    back = FuzzyModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(back.centers, model.centers)
    assert back.meta == {"column_meta_hash": "abc"} and back.fuzzifier_m == model.fuzzifier_m
    np.testing.assert_array_equal(back.predict(x), model.predict(x))


def test_model_validation():
    with pytest.raises(ValueError):
        FuzzyModel(np.zeros((2, 2)), 1.5, 3)
    with pytest.raises(ValueError):
        FuzzyModel(np.array([[np.nan, 0], [0, 0]]), 1.5, 2)


finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@given(arrays(float, st.tuples(st.integers(2, 6), st.integers(1, 3)), elements=finite),
       st.permutations(range(6)), arrays(float, 3, elements=finite))
def test_mcd_permutation_and_translation_invariant(c, perm, shift):
    perm = [p for p in perm if p < c.shape[0]]
    assert mcd(c[perm]) == mcd(c)
    assert mcd(c + shift[: c.shape[1]]) == pytest.approx(mcd(c), rel=1e-9, abs=1e-6)


@given(st.integers(0, 10_000), st.integers(2, 5), st.floats(1.1, 3.0))
def test_rows_sum_to_one_and_objective_never_rises(seed, k, m):
    x = np.random.default_rng(seed).random((25, 2))
    trace = []

    def cb(it, centers, u, obj):
        trace.append(obj)
        assert np.abs(u.sum(axis=1) - 1).max() <= 1e-9

    fcm_fit(x, k, m, seed=seed, callback=cb, check_objective=True)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(trace, trace[1:]))
