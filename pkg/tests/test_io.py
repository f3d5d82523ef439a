import io

import pytest

from spatialtac.io import ParseError, read_frostt, read_matrix_market


def mm(*lines):
    return io.StringIO("\n".join(lines) + "\n")


def test_matrix_market_real_general():
    entries, shape = read_matrix_market(mm("%%MatrixMarket matrix coordinate real general",
                                           "1 1 1", "1 1 3.0"))
    assert entries == [((0, 0), 3.0)]
    assert shape == (1, 1)


def test_matrix_market_symmetric_expands():
    entries, _ = read_matrix_market(mm("%%MatrixMarket matrix coordinate real symmetric",
                                       "% comment", "2 2 1", "2 1 4"))
    assert entries == [((0, 1), 4.0), ((1, 0), 4.0)]


def test_matrix_market_pattern_defaults_to_one():
    entries, _ = read_matrix_market(mm("%%MatrixMarket matrix coordinate pattern general",
                                       "2 2 2", "1 2", "2 1"))
    assert [v for _, v in entries] == [1.0, 1.0]


def test_matrix_market_errors_carry_line():
    with pytest.raises(ParseError) as err:
        read_matrix_market(mm("%%MatrixMarket matrix coordinate real general", "2 2 1",
                              "1 x 3"))
    assert err.value.line == 3
    with pytest.raises(ParseError) as err:
        read_matrix_market(mm("garbage"))
    assert err.value.line == 1


def test_frostt_basic_and_duplicates():
    entries, shape = read_frostt(io.StringIO("1 2 3 4.5\n1 2 3 1.5\n"))
    assert entries == [((0, 1, 2), 6.0)]
    assert shape == (1, 2, 3)


def test_frostt_empty_with_dims():
    entries, shape = read_frostt(io.StringIO(""), dims=(2, 2, 2))
    assert entries == [] and shape == (2, 2, 2)


def test_frostt_arity_mismatch():
    with pytest.raises(ParseError) as err:
        read_frostt(io.StringIO("1 1 1 1.0\n1 1 2.0\n"))
    assert err.value.line == 2
