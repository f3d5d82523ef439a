import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatialtac.notation import parse_expression
from spatialtac.oracle import ShapeError, dense_eval

SDDMM = parse_expression("A(i,j) = B(i,j) * C(i,k) * D(k,j)")


def test_spmv_identity():
    a = parse_expression("y(i) = A(i,j) * x(j)")
    y = dense_eval(a, {"A": np.eye(2), "x": np.array([3.0, 4.0])})
    assert y.tolist() == [3, 4]


def test_sddmm_examples():
    C = np.array([[1, 2], [3, 4]])
    D = np.array([[5, 6], [7, 8]])
    assert dense_eval(SDDMM, {"B": np.zeros((2, 2)), "C": C, "D": D}).tolist() == [[0, 0], [0, 0]]
    out = dense_eval(SDDMM, {"B": np.eye(2, dtype=int), "C": C, "D": D})
    assert out.tolist() == [[19, 0], [0, 50]]


def test_scalar_output_and_subtraction():
    ip = parse_expression("alpha = B(i,j,k) * C(i,j,k)")
    b = np.arange(8.0).reshape(2, 2, 2)
    assert dense_eval(ip, {"B": b, "C": b}).shape == ()
    assert dense_eval(ip, {"B": b, "C": b}) == pytest.approx((b * b).sum())
    res = parse_expression("y(i) = b(i) - A(i,j) * x(j)")
    out = dense_eval(res, {"b": np.ones(2), "A": np.eye(2), "x": np.array([2.0, 3.0])})
    assert out.tolist() == [-1, -2]


def test_extent_mismatch():
    a = parse_expression("y(i) = A(i,j) * x(j)")
    with pytest.raises(ShapeError):
        dense_eval(a, {"A": np.ones((2, 3)), "x": np.ones(2)})


@given(st.integers(0, 10**6))
def test_reduction_order_invariance(seed):
    rng = np.random.default_rng(seed)
    B, C, D = rng.random((4, 5)), rng.random((4, 3)), rng.random((3, 5))
    out = dense_eval(SDDMM, {"B": B, "C": C, "D": D})
    ref = np.zeros((4, 5))
    for k in reversed(range(3)):
        ref += B * np.outer(C[:, k], D[k, :])
    assert np.allclose(out, ref, rtol=1e-9, atol=0)
