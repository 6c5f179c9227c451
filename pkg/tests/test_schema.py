import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lls import (
    DataError,
    Schema,
    add_level,
    enumerate_moment_indices,
    enumerate_patterns,
    moment_indices_up_to,
    multinomial_coefficient,
    parse_pattern,
    pattern_order,
    pattern_to_string,
)

schemas = st.lists(st.integers(2, 5), min_size=2, max_size=5).map(
    lambda ls: Schema(tuple(ls))
)


def test_schema_validation():
    with pytest.raises(DataError):
        Schema((3,))
    with pytest.raises(DataError):
        Schema((2, 1))
    s = Schema((2, 3))
    assert s.n_variables == 2
    assert s.total_cells == 5


def test_flatten_known_values():
    s = Schema((2, 2, 2))
    assert s.flatten(1, 1) == 0
    assert s.flatten(3, 2) == 5
    assert Schema((3, 4)).flatten(2, 1) == 3


def test_flatten_rejects_out_of_range():
    s = Schema((2, 2))
    with pytest.raises(ValueError):
        s.flatten(1, 3)
    with pytest.raises(ValueError):
        s.flatten(3, 1)


@given(schemas, st.data())
def test_flatten_unflatten_roundtrip(s, data):
    row = data.draw(st.integers(0, s.total_cells - 1))
    j, l = s.unflatten(row)
    assert s.flatten(j, l) == row
    assert 1 <= j <= s.n_variables
    assert 1 <= l <= s.levels[j - 1]


def test_flatten_is_bijection_onto_rows():
    s = Schema((2, 3, 2))
    rows = {
        s.flatten(j, l)
        for j in range(1, 4)
        for l in range(1, s.levels[j - 1] + 1)
    }
    assert rows == set(range(s.total_cells))


def test_add_level():
    s = Schema((2, 2, 2))
    p = add_level(s, (0, 0, 0), 2, 1)
    assert p == (0, 1, 0)
    assert pattern_order(p) == pattern_order((0, 0, 0)) + 1
    with pytest.raises(ValueError):
        add_level(s, p, 2, 2)  # already fixed
    with pytest.raises(ValueError):
        add_level(s, p, 1, 3)  # bad level


def test_enumerate_patterns_counts():
    s = Schema((2, 2, 2))
    assert len(enumerate_patterns(s, 0)) == 1
    assert len(enumerate_patterns(s, 1)) == 7
    assert len(enumerate_patterns(s, 2)) == 19


def test_enumerate_patterns_canonical_order():
    s = Schema((2, 2, 2))
    pats = enumerate_patterns(s, 2)
    assert pats[0] == (0, 0, 0)
    orders = [pattern_order(p) for p in pats]
    assert orders == sorted(orders)
    # lexicographic inside each order block
    for order in (1, 2):
        block = [p for p in pats if pattern_order(p) == order]
        assert block == sorted(block)
    assert len(set(pats)) == len(pats)


@given(schemas)
def test_enumerate_patterns_full_order_counts_everything(s):
    # brute-force count: prod(L_j + 1) patterns in total
    pats = enumerate_patterns(s, s.n_variables)
    expect = math.prod(lv + 1 for lv in s.levels)
    assert len(pats) == expect
    assert len(set(pats)) == expect


def test_enumerate_moment_indices_known():
    assert enumerate_moment_indices(2, 1) == [(1, 0), (0, 1)]
    assert len(enumerate_moment_indices(2, 3)) == 4


@given(st.integers(1, 5), st.integers(0, 6))
def test_enumerate_moment_indices_cardinality(k, order):
    idx = enumerate_moment_indices(k, order)
    assert len(idx) == math.comb(order + k - 1, k - 1)
    assert all(sum(v) == order for v in idx)
    assert len(set(idx)) == len(idx)


def test_multinomial_known_values():
    assert multinomial_coefficient((0, 0)) == 1
    assert multinomial_coefficient((2, 1)) == 3
    assert multinomial_coefficient((2, 2, 1)) == 30


@given(st.integers(1, 4), st.integers(0, 6))
def test_multinomial_binomial_theorem(k, order):
    # sum of multinomial coefficients over all indices of one order = k^order
    total = sum(multinomial_coefficient(v) for v in enumerate_moment_indices(k, order))
    assert total == k**order


def test_moment_indices_up_to():
    idx = moment_indices_up_to(2, 2)
    assert idx == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_pattern_string_roundtrip():
    s = Schema((2, 2, 3))
    p = (1, 0, 2)
    assert pattern_to_string(p) == "1,0,2"
    assert parse_pattern(s, "1,0,2") == p
    with pytest.raises(DataError):
        parse_pattern(s, "1,0")
    with pytest.raises(DataError):
        parse_pattern(s, "1,0,9")
    with pytest.raises(DataError):
        parse_pattern(s, "1,x,2")
