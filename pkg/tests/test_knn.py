import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dataflow_sca.errors import InvalidArgument
from dataflow_sca.knn import knn_fit, knn_predict, knn_predict_many_k, knn_predict_proba


def scan_oracle(points, labels, query, k):
    """Exhaustive scan: order by (distance, index), majority vote, ties to the
    class whose nearest member is closest."""
    d = [(float(sum((p - query) ** 2)), i) for i, p in enumerate(points)]
    d.sort()
    top = [labels[i] for _, i in d[:k]]
    counts = {}
    for c in top:
        counts[c] = counts.get(c, 0) + 1
    best = max(counts.values())
    return next(c for c in top if counts[c] == best)


def test_single_point():
    m = knn_fit([[1.0, 2.0]], [3], 1)
    assert knn_predict(m, [100.0, -5.0]) == 3


def test_separated_clusters():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 0.1, size=(10, 2))
    b = rng.normal(5, 0.1, size=(10, 2))
    m = knn_fit(np.vstack([a, b]), [0] * 10 + [1] * 10, 3)
    assert knn_predict(m, a.mean(axis=0)) == 0
    assert knn_predict(m, b.mean(axis=0)) == 1


def test_exact_match_and_two_point_tie():
    m = knn_fit([[0.0], [2.0]], [1, 0], 1)
    assert knn_predict(m, [2.0]) == 0
    tie = knn_fit([[-1.0], [1.0]], [1, 0], 2)
    # both at distance 1; lower index goes first, so its class wins the 1-1 vote
    assert knn_predict(tie, [0.0]) == 1
    assert knn_predict(knn_fit([[1.0], [-1.0]], [1, 0], 2), [0.0]) == 1


@pytest.mark.parametrize("seed", range(3))
def test_random_oracle_thirty_points(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(30, 4))
    y = rng.integers(0, 3, size=30)
    Q = rng.normal(size=(100, 4))
    m = knn_fit(P, y, 5)
    pred = knn_predict(m, Q)
    assert [int(p) for p in pred] == [scan_oracle(P, y, q, 5) for q in Q]


def test_grid_ties_match_oracle():
    rng = np.random.default_rng(9)
    P = rng.integers(-3, 4, size=(50, 2)).astype(float)
    y = rng.integers(0, 4, size=50)
    Q = rng.integers(-3, 4, size=(100, 2)).astype(float)
    for k in (1, 2, 4, 6):
        pred = knn_fit(P, y, k).predict(Q)
        assert [int(p) for p in pred] == [scan_oracle(P, y, q, k) for q in Q]


def test_many_k_matches_individual_fits():
    rng = np.random.default_rng(4)
    P, y, Q = rng.normal(size=(40, 3)), rng.integers(0, 2, 40), rng.normal(size=(25, 3))
    many = knn_predict_many_k(P, y, 2, Q, (1, 3, 5, 7))
    for k, pred in many.items():
        assert np.array_equal(pred, knn_fit(P, y, k, 2).predict(Q))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1e3, 1e3), st.integers(1, 9))
def test_translation_invariance(seed, shift, k):
    rng = np.random.default_rng(seed)
    P = rng.integers(-5, 6, size=(20, 3)).astype(float)
    y = rng.integers(0, 3, size=20)
    Q = rng.integers(-5, 6, size=(15, 3)).astype(float)
    shift = np.round(shift)
    a = knn_fit(P, y, k).predict(Q)
    b = knn_fit(P + shift, y, k).predict(Q + shift)
    assert np.array_equal(a, b)


def test_proba_is_vote_fraction():
    m = knn_fit([[0.0], [0.1], [5.0]], [0, 0, 1], 3)
    np.testing.assert_allclose(knn_predict_proba(m, [[0.0]]), [[2 / 3, 1 / 3]])


def test_errors():
    with pytest.raises(InvalidArgument):
        knn_fit([[0.0], [1.0]], [0, 1], 3)
    with pytest.raises(InvalidArgument):
        knn_fit(np.empty((0, 2)), [], 1)
    m = knn_fit([[0.0, 1.0]], [0], 1)
    with pytest.raises(InvalidArgument):
        knn_predict(m, [1.0, 2.0, 3.0])
