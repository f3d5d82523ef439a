"""Bit vectors packed into machine words, and the scanner semantics."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np


def num_words(extent: int, word: int) -> int:
    return -(-extent // word)


def pack_bitvector(crd: Sequence[int], extent: int, word: int = 32) -> list[int]:
    """Set bit ``c`` (LSB-first within each word) for every coordinate ``c``."""
    if word < 1:
        raise ValueError("word size must be positive")
    words = [0] * num_words(extent, word)
    for c in crd:
        c = int(c)
        if not 0 <= c < extent:
            raise ValueError(f"coordinate {c} outside extent {extent}")
        words[c // word] |= 1 << (c % word)
    return words


def to_bits(words: Sequence[int], extent: int, word: int) -> np.ndarray:
    bits = np.zeros(extent, dtype=bool)
    for w, value in enumerate(words):
        for b in range(word):
            i = w * word + b
            if i < extent and value >> b & 1:
                bits[i] = True
    return bits


def combine(a: Sequence[int], b: Sequence[int], op: str) -> list[int]:
    if op == "AND":
        return [x & y for x, y in zip(a, b)]
    if op == "OR":
        return [x | y for x, y in zip(a, b)]
    raise ValueError(f"unknown bit-vector operator {op!r}")


def rank(words: Sequence[int], idx: int, word: int) -> int:
    """Set bits strictly below ``idx``, or -1 when bit ``idx`` is clear."""
    w, b = divmod(idx, word)
    if not words[w] >> b & 1:
        return -1
    below = sum(bin(x).count("1") for x in words[:w])
    return below + bin(words[w] & ((1 << b) - 1)).count("1")


def scan(operands: Sequence[Sequence[int]], op: str | None, word: int
         ) -> Iterator[tuple[tuple[int, ...], int, int]]:
    """Yield ``(operand ranks, combined rank, index)`` for every set bit.

    With one operand, ``op`` is ignored and the scan enumerates that
    vector; with two, the combined vector is their AND or OR and operand
    ranks are -1 where the operand's bit is clear.
    """
    if len(operands) == 1:
        combined = list(operands[0])
    elif len(operands) == 2:
        combined = combine(operands[0], operands[1], op)
    else:
        raise ValueError("a scanner takes one or two bit vectors")
    below = [0] * len(operands)
    out = 0
    for w, value in enumerate(combined):
        while value:
            low = value & -value
            b = low.bit_length() - 1
            value ^= low
            ranks = tuple(below[k] + bin(vec[w] & (low - 1)).count("1") if vec[w] & low else -1
                          for k, vec in enumerate(operands))
            yield ranks, out, w * word + b
            out += 1
        for k, vec in enumerate(operands):
            below[k] += bin(vec[w]).count("1")


def intersect_sorted(a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Two-pointer intersection of sorted coordinate lists."""
    i = j = 0
    out = []
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            out.append(a[i])
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return out


def union_sorted(a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Two-pointer union of sorted coordinate lists."""
    i = j = 0
    out = []
    while i < len(a) or j < len(b):
        if j == len(b) or (i < len(a) and a[i] < b[j]):
            out.append(a[i])
            i += 1
        elif i == len(a) or b[j] < a[i]:
            out.append(b[j])
            j += 1
        else:
            out.append(a[i])
            i += 1
            j += 1
    return out
