import random

import pytest
from hypothesis import given, strategies as st

from spatialtac.lowering import pack_bitvector
from spatialtac.lowering.bitvector import (combine, intersect_sorted, num_words, rank, scan,
                                           to_bits, union_sorted)


def test_pack_examples():
    assert pack_bitvector([0, 2, 3], 4, 4) == [0b1101]
    assert pack_bitvector([], 128, 32) == [0, 0, 0, 0]
    assert pack_bitvector(list(range(32)), 32, 32) == [2**32 - 1]


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        pack_bitvector([4], 4, 4)


@given(st.sets(st.integers(0, 299)), st.sampled_from([8, 16, 32]))
def test_pack_membership(coords, word):
    words = pack_bitvector(sorted(coords), 300, word)
    assert len(words) == num_words(300, word)
    bits = to_bits(words, 300, word)
    assert {i for i in range(300) if bits[i]} == coords


def test_rank():
    w = pack_bitvector([1, 5, 40], 64, 32)
    assert [rank(w, i, 32) for i in (1, 5, 40)] == [0, 1, 2]
    assert rank(w, 2, 32) == -1


def _pair(rng):
    extent = rng.randint(1, 1024)
    u = sorted(rng.sample(range(extent), rng.randint(0, min(extent, 64))))
    v = sorted(rng.sample(range(extent), rng.randint(0, min(extent, 64))))
    return extent, u, v


@pytest.mark.parametrize("word", [16, 32])
def test_scans_match_two_pointer_merge(word):
    rng = random.Random(word)
    for _ in range(1000):
        extent, u, v = _pair(rng)
        bu, bv = pack_bitvector(u, extent, word), pack_bitvector(v, extent, word)
        for op, ref in (("AND", intersect_sorted(u, v)), ("OR", union_sorted(u, v))):
            got = list(scan([bu, bv], op, word))
            assert [idx for _, _, idx in got] == ref
            assert [out for _, out, _ in got] == list(range(len(ref)))
            for (ru, rv), _, idx in got:
                assert ru == (u.index(idx) if idx in u else -1)
                assert rv == (v.index(idx) if idx in v else -1)
        single = list(scan([bu], None, word))
        assert [idx for _, _, idx in single] == u
        assert [r[0] for r, _, _ in single] == list(range(len(u)))


def test_two_pointer_reference():
    assert intersect_sorted([1, 3, 5], [3, 4, 5]) == [3, 5]
    assert union_sorted([1, 3, 5], [3, 4, 5]) == [1, 3, 4, 5]
    assert combine([0b1100], [0b1010], "AND") == [0b1000]
    with pytest.raises(ValueError):
        combine([1], [1], "XOR")
