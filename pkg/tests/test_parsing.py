import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llm_rerank.models.parsing import (
    extract_identifiers,
    format_permutation,
    parse_permutation,
    parse_selection,
)


@pytest.mark.parametrize(
    "raw, w, indices, repaired",
    [
        ("[2] > [1] > [3]", 3, [1, 0, 2], False),
        ("I think [5] then [1]", 3, [0, 1, 2], True),
        ("", 4, [0, 1, 2, 3], True),
        ("[2] > [2] > [1]", 3, [1, 0, 2], True),
        ("2 > 3 > 1", 3, [1, 2, 0], False),
        ("[3], [1], [2]", 3, [2, 0, 1], False),
        ("[2]\n[1]", 2, [1, 0], False),
        ("1. [3]\n2. [1]\n3. [2]", 3, [2, 0, 1], False),
        ("[0] > [1]", 2, [0, 1], True),
        ("[ 2 ] > [ 1 ]", 2, [1, 0], False),
        ("[99999999999999] > [1]", 2, [0, 1], True),
    ],
)
def test_parse_examples(raw, w, indices, repaired):
    parsed = parse_permutation(raw, w)
    assert parsed.indices == indices
    assert parsed.repaired is repaired
    assert parsed.raw == raw


def test_parse_bytes_with_bad_utf8():
    parsed = parse_permutation(b"\xff[2] > \xfe[1]", 2)
    assert parsed.indices == [1, 0]


def test_parse_rejects_empty_window():
    with pytest.raises(ValueError):
        parse_permutation("[1]", 0)


def test_extract_prefers_brackets():
    assert extract_identifiers("1. [3] 2. [1]") == [3, 1]
    assert extract_identifiers("3 1 2") == [3, 1, 2]


def test_format_round_trip():
    assert format_permutation([1, 0, 2]) == "[2] > [1] > [3]"


@settings(max_examples=300)
@given(st.binary(max_size=200), st.integers(1, 20))
def test_parse_always_valid_permutation(raw, w):
    parsed = parse_permutation(raw, w)
    assert sorted(parsed.indices) == list(range(w))


@settings(max_examples=300)
@given(st.permutations(list(range(20))), st.integers(1, 20), st.sampled_from([" > ", ">", ", ", "\n", " "]))
def test_well_formed_round_trip(perm, w, sep):
    perm = [i for i in perm if i < w]
    raw = sep.join(f"[{i + 1}]" for i in perm)
    parsed = parse_permutation(raw, w)
    assert parsed.indices == perm
    assert not parsed.repaired


@given(st.text(max_size=100), st.integers(1, 20), st.data())
def test_selection_always_valid(raw, w, data):
    m = data.draw(st.integers(1, w))
    parsed = parse_selection(raw, w, m)
    assert len(parsed.indices) == m
    assert len(set(parsed.indices)) == m
    assert all(0 <= i < w for i in parsed.indices)


def test_selection_examples():
    assert parse_selection("[4] > [2]", 5, 2).indices == [3, 1]
    assert not parse_selection("[4] > [2]", 5, 2).repaired
    extra = parse_selection("[4] > [2] > [1]", 5, 2)
    assert extra.indices == [3, 1] and extra.repaired
    with pytest.raises(ValueError):
        parse_selection("", 3, 4)
