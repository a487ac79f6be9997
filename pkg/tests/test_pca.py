import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dataflow_sca.errors import InvalidArgument, RankDeficient
from dataflow_sca.pca import fit, transform


def cov_eig_oracle(X):
    """Descending eigenvalues of the explicit sample covariance matrix."""
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / (X.shape[0] - 1)
    return np.sort(np.linalg.eigvalsh(C))[::-1]


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n, L = int(rng.integers(5, 51)), int(rng.integers(8, 65))
    return rng.normal(size=(n, L)) * rng.uniform(0.5, 3.0, size=L)


def test_line_y_equals_x():
    rng = np.random.default_rng(0)
    t = rng.normal(size=200)
    X = np.column_stack([t, t]) + rng.normal(scale=1e-6, size=(200, 2))
    m = fit(X, 2)
    np.testing.assert_allclose(m.components[0], np.array([1, 1]) / np.sqrt(2), atol=1e-5)
    assert m.explained_variance[1] < 1e-10


def test_matches_covariance_oracle_ten_by_eight():
    X = np.random.default_rng(3).normal(size=(10, 8))
    m = fit(X, 8)
    np.testing.assert_allclose(m.explained_variance, cov_eig_oracle(X)[:8], rtol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_random_instances(seed):
    X = random_instance(seed)
    n, L = X.shape
    k = min(n - 1, L)
    m = fit(X, k)
    np.testing.assert_allclose(m.explained_variance, cov_eig_oracle(X)[:k], rtol=1e-8)
    V = m.components
    np.testing.assert_allclose(V @ V.T, np.eye(k), atol=1e-6)
    assert np.all(np.diff(m.explained_variance) <= 1e-12)
    assert np.max(np.abs(transform(m, m.mean))) <= 1e-9
    total = ((X - X.mean(axis=0)) ** 2).sum() / (n - 1)
    assert m.explained_variance.sum() == pytest.approx(total, rel=1e-6)
    t = X[0] + np.random.default_rng(seed).normal(size=L)
    errs = [np.linalg.norm(t - m.mean - transform(m, t, j) @ V[:j]) for j in range(1, k + 1)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_component_projection():
    X = random_instance(7)
    m = fit(X, 4)
    for k in range(4):
        out = transform(m, m.mean + 2.5 * m.components[k])
        expect = np.zeros(4)
        expect[k] = 2.5
        np.testing.assert_allclose(out, expect, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_transform_is_affine_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 20))
    m = fit(X, 6)
    t1, t2 = rng.normal(size=20), rng.normal(size=20)
    lhs = transform(m, a * t1 + b * t2 + (1 - a - b) * m.mean)
    rhs = a * transform(m, t1) + b * transform(m, t2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_fit_is_bit_deterministic():
    X = random_instance(11)
    a, b = fit(X, 4), fit(X.copy(), 4)
    assert np.array_equal(a.components, b.components)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.explained_variance, b.explained_variance)


def test_sign_convention():
    m = fit(random_instance(5), 4)
    for row in m.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_gram_route_agrees_with_svd():
    X = np.random.default_rng(2).normal(size=(15, 300))
    a, b = fit(X, 10, method="svd"), fit(X, 10, method="gram")
    np.testing.assert_allclose(a.explained_variance, b.explained_variance, rtol=1e-9)
    np.testing.assert_allclose(a.components, b.components, atol=1e-8)


def test_list_of_traces_input(small_ds):
    rows = [lt.trace.samples[:64] for lt in small_ds.traces[:20]]
    m = fit(rows, 5)
    assert m.window_len == 64 and m.n_comp_max == 5


def test_errors():
    with pytest.raises(InvalidArgument):
        fit(np.zeros((1, 4)), 1)
    with pytest.raises(RankDeficient) as exc:
        fit(np.ones((6, 4)), 2)
    assert exc.value.achievable == 0
    with pytest.raises(RankDeficient):
        fit(np.random.default_rng(0).normal(size=(5, 8)), 5)
    m = fit(np.random.default_rng(0).normal(size=(5, 8)), 3)
    with pytest.raises(InvalidArgument):
        transform(m, np.zeros(7))
    with pytest.raises(InvalidArgument):
        transform(m, np.zeros(8), 4)
