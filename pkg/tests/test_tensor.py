import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatialtac.tensor import (COMPRESSED, UNCOMPRESSED, TensorFormat, csc, csr, dense_format,
                               entries_from_dense, iter_stored, pack, pack_dense, unpack)


def test_pack_empty_csr():
    t = pack([], (2, 2), csr())
    assert t.pos[1].tolist() == [0, 0, 0]
    assert t.crd[1].tolist() == []
    assert t.vals.tolist() == []


def test_pack_diagonal_csr():
    t = pack([((0, 0), 1), ((1, 1), 2)], (2, 2), csr())
    assert t.pos[1].tolist() == [0, 1, 2]
    assert t.crd[1].tolist() == [0, 1]
    assert t.vals.tolist() == [1, 2]


def test_pack_column_major():
    t = pack([((0, 1), 5)], (2, 2), csc())
    assert t.pos[1].tolist() == [0, 0, 1]
    assert t.crd[1].tolist() == [0]
    assert t.vals.tolist() == [5]


def test_unpack_examples():
    t = pack([((0, 0), 1), ((1, 1), 2)], (2, 2), csr())
    assert unpack(t).tolist() == [[1, 0], [0, 2]]
    assert unpack(pack([], (2, 2), csr())).tolist() == [[0, 0], [0, 0]]


def test_dense_format_is_row_major_identity():
    a = np.arange(1, 7, dtype=float).reshape(2, 3)
    t = pack_dense(a, dense_format(2))
    assert t.vals.tolist() == a.ravel().tolist()
    assert np.array_equal(unpack(t), a)


def test_pack_rejects_bad_input():
    with pytest.raises(ValueError, match="duplicate"):
        pack([((0, 0), 1), ((0, 0), 2)], (2, 2), csr())
    with pytest.raises(ValueError, match="out of bounds"):
        pack([((2, 0), 1)], (2, 2), csr())
    with pytest.raises(ValueError):
        TensorFormat((UNCOMPRESSED, COMPRESSED), (0, 0))


def test_explicit_zero_is_stored():
    t = pack([((0, 1), 0.0)], (2, 2), csr())
    assert t.crd[1].tolist() == [1]


def test_unsorted_entries_are_sorted():
    t = pack([((1, 1), 2), ((0, 0), 1)], (2, 2), csr())
    assert t.crd[1].tolist() == [0, 1]


def test_validate_catches_corruption():
    t = pack([((0, 0), 1), ((1, 1), 2)], (2, 2), csr())
    t.pos[1][1] = 3
    with pytest.raises(ValueError):
        t.validate()


@st.composite
def sparse_tensors(draw):
    order = draw(st.integers(1, 3))
    shape = tuple(draw(st.lists(st.integers(1, 8 if order == 3 else 64), min_size=order,
                                max_size=order)))
    levels = tuple(draw(st.lists(st.sampled_from([UNCOMPRESSED, COMPRESSED]), min_size=order,
                                 max_size=order)))
    perm = tuple(draw(st.permutations(range(order))))
    seed = draw(st.integers(0, 2**31))
    density = draw(st.sampled_from([0.0, 0.05, 0.3, 1.0]))
    rng = np.random.default_rng(seed)
    a = np.where(rng.random(shape) < density, rng.integers(1, 9, shape), 0).astype(float)
    return a, TensorFormat(levels, perm)


@given(sparse_tensors())
def test_pack_unpack_round_trip(case):
    a, fmt = case
    t = pack_dense(a, fmt)
    t.validate()
    assert np.array_equal(unpack(t), a)
    again = pack_dense(unpack(t), fmt)
    if not fmt.is_dense:
        assert again.equals(t)


@given(sparse_tensors())
def test_iteration_enumerates_nonzeros(case):
    a, fmt = case
    t = pack_dense(a, fmt)
    stored = {c for c, v in iter_stored(t) if v != 0}
    assert stored == {c for c, _ in entries_from_dense(a)}
