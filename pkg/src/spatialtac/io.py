"""Readers for MatrixMarket (.mtx) and FROSTT (.tns) coordinate files.

Both readers return a sorted, deduplicated coordinate list with 0-based
coordinates plus the tensor shape. Duplicate coordinates are summed.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Sequence, TextIO

from .tensor import Entry


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


_MM_FIELDS = {"real", "integer", "pattern", "double"}
_MM_SYMMETRY = {"general", "symmetric"}


def _finish(acc: dict, shape: tuple[int, ...]) -> tuple[list[Entry], tuple[int, ...]]:
    return sorted(acc.items()), shape


def read_matrix_market(stream: TextIO | Iterable[str]) -> tuple[list[Entry], tuple[int, ...]]:
    lines = iter(enumerate(stream, start=1))
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    fields = header.strip().lower().split()
    if len(fields) != 5 or fields[0] != "%%matrixmarket" or fields[1] != "matrix":
        raise ParseError(f"bad header {header.strip()!r}", lineno)
    if fields[2] != "coordinate":
        raise ParseError(f"unsupported storage {fields[2]!r}", lineno)
    field, symmetry = fields[3], fields[4]
    if field not in _MM_FIELDS or symmetry not in _MM_SYMMETRY:
        raise ParseError(f"unsupported field/symmetry {field} {symmetry}", lineno)
    cast = int if field == "integer" else float

    size = None
    acc: dict[tuple[int, ...], float] = defaultdict(float)
    for lineno, raw in lines:
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if size is None:
            if len(parts) != 3:
                raise ParseError("size line must have rows, cols, nnz", lineno)
            try:
                size = tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError(f"bad size line {text!r}", lineno) from None
            continue
        expected = 2 if field == "pattern" else 3
        if len(parts) != expected:
            raise ParseError(f"expected {expected} fields, got {len(parts)}", lineno)
        try:
            r, c = int(parts[0]) - 1, int(parts[1]) - 1
            value = 1.0 if field == "pattern" else cast(parts[2])
        except ValueError:
            raise ParseError(f"bad entry {text!r}", lineno) from None
        if not (0 <= r < size[0] and 0 <= c < size[1]):
            raise ParseError(f"entry ({r + 1}, {c + 1}) outside {size[0]}x{size[1]}", lineno)
        acc[(r, c)] += value
        if symmetry == "symmetric" and r != c:
            acc[(c, r)] += value
    if size is None:
        raise ParseError("missing size line")
    return _finish(acc, size[:2])


def read_frostt(stream: TextIO | Iterable[str],
                dims: Sequence[int] | None = None) -> tuple[list[Entry], tuple[int, ...]]:
    """Read a .tns file (1-based coordinates, value in the last column).

    Without ``dims`` the shape is the per-mode maximum coordinate.
    """
    acc: dict[tuple[int, ...], float] = defaultdict(float)
    arity = len(dims) if dims is not None else None
    for lineno, raw in enumerate(stream, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if arity is None:
            arity = len(parts) - 1
        if len(parts) - 1 != arity or arity < 1:
            raise ParseError(f"expected {arity} coordinates, got {len(parts) - 1}", lineno)
        try:
            coord = tuple(int(p) - 1 for p in parts[:-1])
            value = float(parts[-1])
        except ValueError:
            raise ParseError(f"bad entry {text!r}", lineno) from None
        if any(c < 0 for c in coord):
            raise ParseError("coordinates are 1-based", lineno)
        if dims is not None and any(c >= d for c, d in zip(coord, dims)):
            raise ParseError(f"coordinate {coord} outside {tuple(dims)}", lineno)
        acc[coord] += value
    if dims is not None:
        shape = tuple(int(d) for d in dims)
    elif acc:
        shape = tuple(max(c[m] for c in acc) + 1 for m in range(arity))
    else:
        raise ParseError("empty file and no dims given")
    return _finish(acc, shape)
