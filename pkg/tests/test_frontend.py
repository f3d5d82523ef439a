import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatialtac.cin import format_stmt, interpret_cin
from spatialtac.expr import Sub, index_vars, tensor
from spatialtac.notation import assign, parse_expression, pretty_print, to_cin
from spatialtac.oracle import dense_eval
from spatialtac.syntax import NotationError


def names(vs):
    return [v.name for v in vs]


def test_parse_sddmm():
    a = parse_expression("A(i,j) = B(i,j) * C(i,k) * D(k,j)")
    assert names(a.reduction_vars) == ["k"]
    assert a.lhs.tensor.name == "A"


def test_parse_scalar_lhs():
    a = parse_expression("alpha = B(i,j,k) * C(i,j,k)")
    assert a.lhs.indices == ()
    assert names(a.reduction_vars) == ["i", "j", "k"]


def test_parse_subtraction():
    a = parse_expression("y(i) = b(i) - A(i,j) * x(j)")
    assert isinstance(a.rhs, Sub)
    assert names(a.reduction_vars) == ["j"]


@pytest.mark.parametrize("text", ["A(i,j) = ", "A(i,j) = B(i,j", "A(i) = B(i) / C(i)",
                                  "A(i,j) = B(i)", "A(i,i) = B(i)"])
def test_parse_errors(text):
    with pytest.raises(NotationError):
        parse_expression(text)


def test_parse_error_has_position():
    with pytest.raises(NotationError) as err:
        parse_expression("A(i) = B(i) $ C(i)")
    assert err.value.pos == 12


def test_builder_matches_parser():
    i, j = index_vars("i j")
    y, A, x = tensor("y", order=1), tensor("A", order=2), tensor("x", order=1)
    built = assign(y[i], A[i, j] * x[j])
    assert pretty_print(built) == pretty_print(parse_expression("y(i) = A(i,j) * x(j)"))


def test_to_cin_examples():
    sddmm = parse_expression("A(i,j) = B(i,j) * C(i,k) * D(k,j)")
    assert format_stmt(to_cin(sddmm)) == \
        "forall(i, forall(j, forall(k, A(i,j) += B(i,j) * C(i,k) * D(k,j))))"
    ew = parse_expression("a(i) = b(i) * c(i)")
    assert format_stmt(to_cin(ew)) == "forall(i, a(i) = b(i) * c(i))"
    spmv = parse_expression("y(i) = A(i,j) * x(j)")
    assert format_stmt(to_cin(spmv, ["j", "i"])) == "forall(j, forall(i, y(i) += A(i,j) * x(j)))"


def test_to_cin_rejects_partial_order():
    with pytest.raises(Exception):
        to_cin(parse_expression("y(i) = A(i,j) * x(j)"), ["i"])


EXPRS = ["y(i) = A(i,j) * x(j)", "A(i,j) = B(i,j) * C(i,k) * D(k,j)",
         "y(i) = b(i) - A(i,j) * x(j)", "A(i,j) = B(i,j,k) * c(k)",
         "alpha = B(i,j,k) * C(i,j,k)", "A(i,j) = B(i,j) + C(i,j) + D(i,j)",
         "y(i) = 2 * A(j,i) * x(j) + 3 * z(i)", "A(i,j) = B(i,k,l) * C(j,k) * D(j,l)"]


@pytest.mark.parametrize("text", EXPRS)
def test_print_parse_round_trip(text):
    once = pretty_print(parse_expression(text))
    assert pretty_print(parse_expression(once)) == once


def _inputs(a, extent, rng):
    out = {}
    for name, t in a.tensors().items():
        if name == a.lhs.tensor.name:
            continue
        out[name] = rng.integers(-3, 4, size=(extent,) * t.order).astype(float)
    return out


@given(st.sampled_from(EXPRS), st.integers(1, 6), st.integers(0, 2**31), st.booleans())
def test_cin_matches_oracle(text, extent, seed, permute):
    a = parse_expression(text)
    rng = np.random.default_rng(seed)
    inputs = _inputs(a, extent, rng)
    order = list(rng.permutation(names(a.index_vars))) if permute else None
    got = interpret_cin(to_cin(a, order), inputs)[a.lhs.tensor.name]
    assert np.array_equal(got, dense_eval(a, inputs))
