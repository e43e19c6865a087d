"""Serial-order math must be bit-identical to naive nested loops."""

import math

from hypothesis import given, strategies as st

from moesim.linalg import matvec, matvec_columns, relu, softmax, weighted_sum
from moesim.rng import Xoshiro256StarStar

from oracles import naive_matvec, naive_matvec_t, naive_softmax

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def _rand_matrix(rng, rows, cols):
    return rng.fill_matrix(rows, cols, -1.0, 1.0)


def test_matvec_bit_equal_4x4():
    rng = Xoshiro256StarStar(11)
    mat = _rand_matrix(rng, 4, 4)
    x = rng.fill(4, -1.0, 1.0)
    assert matvec(mat, x) == naive_matvec(mat, x)


def test_matvec_bit_equal_many_shapes():
    rng = Xoshiro256StarStar(12)
    for rows, cols in [(1, 1), (2, 7), (16, 3), (9, 33), (64, 24)]:
        mat = _rand_matrix(rng, rows, cols)
        x = rng.fill(cols, -1.0, 1.0)
        assert matvec(mat, x) == naive_matvec(mat, x)


def test_matvec_columns_bit_equal():
    rng = Xoshiro256StarStar(13)
    for rows, cols in [(1, 1), (5, 2), (12, 12), (24, 64)]:
        mat = _rand_matrix(rng, rows, cols)
        x = rng.fill(rows, -1.0, 1.0)
        assert matvec_columns(mat, x) == naive_matvec_t(mat, x)


def test_softmax_bit_equal_and_normalized():
    rng = Xoshiro256StarStar(14)
    for n in (2, 3, 8, 100):
        logits = rng.fill(n, -5.0, 5.0)
        probs = softmax(logits)
        assert probs == naive_softmax(logits)
        assert abs(sum(probs, 0.0) - 1.0) <= 1e-12


@given(st.lists(finite, min_size=1, max_size=40))
def test_softmax_normalizes(logits):
    probs = softmax(logits)
    assert abs(sum(probs, 0.0) - 1.0) <= 1e-12
    assert all(p >= 0.0 for p in probs)


def test_relu_clamps_and_keeps_positives():
    assert relu([-1.0, 0.0, 2.5, -0.0]) == [0.0, 0.0, 2.5, 0.0]


def test_weighted_sum_order_and_values():
    vecs = [[1.0, 2.0], [10.0, 20.0]]
    assert weighted_sum(vecs, [0.5, 0.25]) == [3.0, 6.0]
    # accumulation order is first-to-last, same as a naive loop
    out = [0.0, 0.0]
    for w, v in zip([0.3, 0.7], vecs):
        for i in range(2):
            out[i] += w * v[i]
    assert weighted_sum(vecs, [0.3, 0.7]) == out


def test_all_finite_helper():
    from moesim.linalg import all_finite
    assert all_finite([0.0, 1.0])
    assert not all_finite([0.0, math.inf])
    assert not all_finite([math.nan])
