"""Turn free-form LLM ranking output into valid index lists."""

from __future__ import annotations

import re
from dataclasses import dataclass

_BRACKETED = re.compile(r"\[\s*([0-9]+)\s*\]")
_BARE = re.compile(r"[0-9]+")
# longer digit runs cannot be a window identifier; skip int() on them
_MAX_DIGITS = 6


@dataclass
class ParsedPermutation:
    indices: list[int]
    repaired: bool
    raw: str


def extract_identifiers(raw: str) -> list[int | None]:
    """1-based identifiers in order of appearance.

    Bracketed ``[k]`` identifiers win when any are present, so numbered-list
    prefixes like ``1.`` in ``"1. [3]"`` are not mistaken for passages. Runs
    too long to be an identifier come back as ``None``.
    """
    found = _BRACKETED.findall(raw) or _BARE.findall(raw)
    return [int(x) if len(x) <= _MAX_DIGITS else None for x in found]


def _decode(raw: str | bytes) -> str:
    if isinstance(raw, bytes):
        return raw.decode("utf-8", errors="replace")
    return raw


def parse_permutation(raw: str | bytes, w: int) -> ParsedPermutation:
    """Parse ``"[2] > [1] > [3]"``-style output into a 0-based permutation.

    Out-of-range and repeated identifiers are dropped, and missing ones are
    appended in ascending order. Never fails: the worst case is the identity.

    >>> parse_permutation("[2] > [2] > [1]", 3).indices
    [1, 0, 2]
    """
    if w < 1:
        raise ValueError(f"window size must be >= 1, got {w}")
    text = _decode(raw)
    seen: set[int] = set()
    indices: list[int] = []
    repaired = False
    for k in extract_identifiers(text):
        if k is None or not 1 <= k <= w or (k - 1) in seen:
            repaired = True
            continue
        seen.add(k - 1)
        indices.append(k - 1)
    missing = [j for j in range(w) if j not in seen]
    if missing:
        repaired = True
        indices.extend(missing)
    return ParsedPermutation(indices, repaired, text)


def parse_selection(raw: str | bytes, w: int, m: int) -> ParsedPermutation:
    """Parse the ``m`` identifiers chosen out of a group of ``w``.

    Same extraction rules as :func:`parse_permutation`; extras are cut and a
    shortfall is filled with the lowest unchosen indices (the group is shown
    in standing order, so those are the best-standing members).
    """
    if not 1 <= m <= w:
        raise ValueError(f"need 1 <= m <= w, got m={m}, w={w}")
    text = _decode(raw)
    chosen: list[int] = []
    repaired = False
    for k in extract_identifiers(text):
        if k is None or not 1 <= k <= w or (k - 1) in chosen:
            repaired = True
            continue
        chosen.append(k - 1)
    if len(chosen) != m:
        repaired = True
    chosen = chosen[:m]
    for j in range(w):
        if len(chosen) == m:
            break
        if j not in chosen:
            chosen.append(j)
    return ParsedPermutation(chosen, repaired, text)


def format_permutation(indices: list[int]) -> str:
    """Inverse of :func:`parse_permutation` for a well-formed permutation."""
    return " > ".join(f"[{i + 1}]" for i in indices)
