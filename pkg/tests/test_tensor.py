import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from mwggm.tensor import (format_array, inner, kron_chain, mode_fold, mode_matricize, mode_product,
                          parse_array, read_array, tucker_product, unvec, vec, write_array)

dims_strategy = hst.lists(hst.integers(1, 4), min_size=1, max_size=4)


def test_vec_is_first_index_fastest():
    X = np.arange(6.0).reshape(2, 3, order="F")
    assert X[1, 0] == 1.0
    assert np.array_equal(vec(X), np.arange(6.0))
    assert np.array_equal(unvec(vec(X), (2, 3)), X)


def test_matricize_example():
    X = np.zeros((2, 3, 2))
    X[:, :, 0] = [[1, 2, 3], [4, 5, 6]]
    X[:, :, 1] = [[7, 8, 9], [10, 11, 12]]
    X1 = mode_matricize(X, 1)
    assert X1.shape == (2, 6)
    assert np.array_equal(X1[0], [1, 2, 3, 7, 8, 9])
    X2 = mode_matricize(X, 2)
    assert np.array_equal(X2[:, 0], [1, 2, 3])
    assert np.array_equal(X2[:, 1], [4, 5, 6])


@settings(max_examples=50, deadline=None)
@given(dims=dims_strategy, seed=hst.integers(0, 2 ** 32 - 1))
def test_fold_inverts_matricize(dims, seed):
    X = np.random.default_rng(seed).standard_normal(dims)
    for l in range(1, len(dims) + 1):
        assert np.array_equal(mode_fold(mode_matricize(X, l), l, dims), X)


@settings(max_examples=50, deadline=None)
@given(dims=dims_strategy, seed=hst.integers(0, 2 ** 32 - 1))
def test_mode_product_matches_matricized_multiplication(dims, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(dims)
    for l, m in enumerate(dims, start=1):
        A = rng.standard_normal((3, m))
        Y = mode_product(X, A, l)
        assert np.allclose(mode_matricize(Y, l), A @ mode_matricize(X, l), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(dims=dims_strategy, seed=hst.integers(0, 2 ** 32 - 1))
def test_tucker_vec_equals_kronecker_chain(dims, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(dims)
    As = [rng.standard_normal((m, m)) for m in dims]
    lhs = vec(tucker_product(X, As))
    rhs = kron_chain(As) @ vec(X)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_identity_tucker_is_noop_and_none_means_identity():
    X = np.random.default_rng(0).standard_normal((2, 3, 4))
    assert np.array_equal(tucker_product(X, [None, None, None]), X)
    assert np.allclose(tucker_product(X, [np.eye(2), np.eye(3), np.eye(4)]), X)


def test_mode_products_commute_across_modes():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((2, 3))
    A, B = rng.standard_normal((2, 2)), rng.standard_normal((3, 3))
    assert np.allclose(mode_product(mode_product(X, A, 1), B, 2), mode_product(mode_product(X, B, 2), A, 1))


def test_dimension_errors():
    X = np.zeros((2, 3))
    with pytest.raises(ValueError):
        mode_product(X, np.eye(3), 1)
    with pytest.raises(ValueError):
        mode_matricize(X, 3)
    with pytest.raises(ValueError):
        tucker_product(X, [None])


def test_inner_is_squared_frobenius():
    X = np.random.default_rng(2).standard_normal((2, 2, 3))
    assert np.isclose(inner(X, X), np.sum(X ** 2))


def test_array_file_round_trip(tmp_path):
    X = np.random.default_rng(3).standard_normal((2, 3, 2)) * 1e-7
    path = tmp_path / "a.txt"
    write_array(path, X)
    assert path.read_text().splitlines()[0] == "dims: 2 3 2"
    assert np.array_equal(read_array(path), X)
    assert format_array(read_array(path)) == path.read_text()


def test_array_file_errors():
    with pytest.raises(ValueError):
        parse_array("1 2 3\n")
    with pytest.raises(ValueError):
        parse_array("dims: 2 2\n1 2 3\n")
