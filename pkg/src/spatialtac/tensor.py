"""Tensor storage formats and packed (level-format) tensors.

A tensor is stored as a sequence of levels, one per mode, visited in the
format's mode order. An uncompressed level stores every coordinate of its
mode implicitly (positions are ``parent * extent + coord``); a compressed
level stores a ``pos`` array of segment boundaries and a ``crd`` array of
coordinates. The ``vals`` array holds one scalar per position of the last
level.

Dense tensors are plain ``numpy.ndarray`` objects in row-major order.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import Iterator, Sequence

import numpy as np

Coord = tuple[int, ...]
Entry = tuple[Coord, float]


class LevelFormat(enum.Enum):
    UNCOMPRESSED = "uncompressed"
    COMPRESSED = "compressed"

    @property
    def short(self) -> str:
        return "U" if self is LevelFormat.UNCOMPRESSED else "C"


class Region(enum.Enum):
    """Memory region a tensor lives in: global DRAM or accelerator-local."""

    OFF_CHIP = "offChip"
    ON_CHIP = "onChip"


UNCOMPRESSED = LevelFormat.UNCOMPRESSED
COMPRESSED = LevelFormat.COMPRESSED
OFF_CHIP = Region.OFF_CHIP
ON_CHIP = Region.ON_CHIP


@dataclasses.dataclass(frozen=True)
class TensorFormat:
    """Per-level formats, mode ordering and memory region of a tensor.

    ``mode_order[l]`` is the mode stored at level ``l``; the default is the
    identity ordering.
    """

    levels: tuple[LevelFormat, ...]
    mode_order: tuple[int, ...] | None = None
    region: Region = Region.OFF_CHIP

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        order = (tuple(range(len(levels))) if self.mode_order is None
                 else tuple(self.mode_order))
        if sorted(order) != list(range(len(levels))):
            raise ValueError(
                f"mode order {order} is not a permutation of 0..{len(levels) - 1}")
        object.__setattr__(self, "mode_order", order)

    @property
    def order(self) -> int:
        return len(self.levels)

    @property
    def is_dense(self) -> bool:
        return all(lv is UNCOMPRESSED for lv in self.levels)

    @property
    def on_chip(self) -> bool:
        return self.region is Region.ON_CHIP

    def level_of_mode(self, mode: int) -> int:
        return self.mode_order.index(mode)

    def with_region(self, region: Region) -> "TensorFormat":
        return dataclasses.replace(self, region=region)

    def __str__(self) -> str:
        lv = ",".join(level.value for level in self.levels)
        perm = ""
        if self.mode_order != tuple(range(self.order)):
            perm = ", {" + ",".join(map(str, self.mode_order)) + "}"
        return f"({{{lv}}}{perm}, {self.region.value})"


def dense_format(order: int, region: Region = OFF_CHIP) -> TensorFormat:
    return TensorFormat((UNCOMPRESSED,) * order, region=region)


def csr(region: Region = OFF_CHIP) -> TensorFormat:
    return TensorFormat((UNCOMPRESSED, COMPRESSED), region=region)


def csc(region: Region = OFF_CHIP) -> TensorFormat:
    return TensorFormat((UNCOMPRESSED, COMPRESSED), (1, 0), region)


def scalar_format(region: Region = ON_CHIP) -> TensorFormat:
    return TensorFormat((), region=region)


@dataclasses.dataclass
class PackedTensor:
    """A tensor packed according to a :class:`TensorFormat`.

    ``pos`` and ``crd`` are keyed by level index (0-based) and only hold
    entries for compressed levels.
    """

    shape: tuple[int, ...]
    format: TensorFormat
    pos: dict[int, np.ndarray]
    crd: dict[int, np.ndarray]
    vals: np.ndarray

    @property
    def order(self) -> int:
        return len(self.shape)

    def level_extent(self, level: int) -> int:
        return self.shape[self.format.mode_order[level]]

    def num_positions(self, level: int) -> int:
        """Number of positions stored at ``level`` (-1 means the root)."""
        count = 1
        for lv in range(level + 1):
            if self.format.levels[lv] is COMPRESSED:
                count = len(self.crd[lv])
            else:
                count *= self.level_extent(lv)
        return count

    def validate(self) -> None:
        """Raise ``ValueError`` if any storage invariant is violated."""
        if len(self.shape) != self.format.order:
            raise ValueError("shape and format disagree on tensor order")
        parents = 1
        for lv, kind in enumerate(self.format.levels):
            extent = self.level_extent(lv)
            if kind is UNCOMPRESSED:
                parents *= extent
                continue
            pos, crd = self.pos[lv], self.crd[lv]
            if len(pos) != parents + 1:
                raise ValueError(
                    f"level {lv}: pos has length {len(pos)}, expected {parents + 1}")
            if pos[0] != 0 or pos[-1] != len(crd):
                raise ValueError(f"level {lv}: pos must start at 0 and end at len(crd)")
            if np.any(np.diff(pos) < 0):
                raise ValueError(f"level {lv}: pos is not nondecreasing")
            for p in range(parents):
                seg = crd[pos[p]:pos[p + 1]]
                if len(seg) and (np.any(np.diff(seg) <= 0) or seg[0] < 0
                                 or seg[-1] >= extent):
                    raise ValueError(
                        f"level {lv}: segment {p} coordinates not strictly "
                        f"increasing within [0, {extent})")
            parents = len(crd)
        if len(self.vals) != parents:
            raise ValueError(
                f"vals has length {len(self.vals)}, expected {parents}")

    def equals(self, other: "PackedTensor") -> bool:
        if self.shape != other.shape or self.format != other.format:
            return False
        if set(self.pos) != set(other.pos):
            return False
        return (all(np.array_equal(self.pos[k], other.pos[k]) for k in self.pos)
                and all(np.array_equal(self.crd[k], other.crd[k]) for k in self.crd)
                and np.array_equal(self.vals, other.vals))


def _level_coords(entries: Sequence[Entry], order: int) -> tuple[np.ndarray, list]:
    if not entries:
        return np.zeros((0, order), dtype=np.int64), []
    coords = np.array([c for c, _ in entries], dtype=np.int64).reshape(len(entries), order)
    return coords, [v for _, v in entries]


def pack(entries: Sequence[Entry], shape: Sequence[int], fmt: TensorFormat,
         dtype=np.float64) -> PackedTensor:
    """Pack a coordinate list into ``fmt``.

    Entries may arrive in any order; they are sorted by the format's mode
    order. Explicit zeros are stored.

    Raises:
        ValueError: on a duplicate or out-of-bounds coordinate.
    """
    shape = tuple(int(s) for s in shape)
    order = len(shape)
    if fmt.order != order:
        raise ValueError(f"format has {fmt.order} levels but shape has {order} modes")
    coords, values = _level_coords(entries, order)
    values = np.asarray(values, dtype=dtype)
    if len(coords):
        if np.any(coords < 0) or np.any(coords >= np.array(shape, dtype=np.int64)):
            bad = coords[np.any((coords < 0) | (coords >= np.array(shape)), axis=1)][0]
            raise ValueError(f"coordinate {tuple(int(c) for c in bad)} out of bounds for shape {shape}")
    level_coords = coords[:, list(fmt.mode_order)] if order else coords
    if len(level_coords) and order:
        perm = np.lexsort(level_coords.T[::-1])
        level_coords = level_coords[perm]
        values = values[perm]
        dup = np.all(level_coords[1:] == level_coords[:-1], axis=1)
        if np.any(dup):
            first = level_coords[1:][dup][0]
            bad = [0] * order
            for lv, mode in enumerate(fmt.mode_order):
                bad[mode] = int(first[lv])
            raise ValueError(f"duplicate coordinate {tuple(bad)}")
    elif len(values) > 1:
        raise ValueError("duplicate coordinate ()")

    parent = np.zeros(len(level_coords), dtype=np.int64)
    num_parents = 1
    pos: dict[int, np.ndarray] = {}
    crd: dict[int, np.ndarray] = {}
    for lv, kind in enumerate(fmt.levels):
        col = level_coords[:, lv]
        extent = shape[fmt.mode_order[lv]]
        if kind is UNCOMPRESSED:
            parent = parent * extent + col
            num_parents *= extent
            continue
        if len(col):
            new = np.ones(len(col), dtype=bool)
            new[1:] = (parent[1:] != parent[:-1]) | (col[1:] != col[:-1])
        else:
            new = np.zeros(0, dtype=bool)
        counts = np.bincount(parent[new], minlength=num_parents)
        pos[lv] = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        crd[lv] = col[new].astype(np.int64)
        parent = np.cumsum(new) - 1
        num_parents = len(crd[lv])
    vals = np.zeros(num_parents, dtype=dtype)
    vals[parent] = values
    return PackedTensor(shape, fmt, pos, crd, vals)


def _positions_and_coords(t: PackedTensor) -> np.ndarray:
    """Return an array of level coordinates for every last-level position."""
    coords = np.zeros((1, 0), dtype=np.int64)
    for lv, kind in enumerate(t.format.levels):
        extent = t.level_extent(lv)
        if kind is UNCOMPRESSED:
            coords = np.repeat(coords, extent, axis=0)
            tail = np.tile(np.arange(extent, dtype=np.int64), len(coords) // max(extent, 1))
            coords = np.column_stack([coords, tail]) if extent else np.zeros((0, lv + 1), np.int64)
        else:
            lengths = np.diff(t.pos[lv])
            coords = np.repeat(coords, lengths, axis=0)
            coords = np.column_stack([coords, t.crd[lv]])
    return coords


def iter_stored(t: PackedTensor) -> Iterator[Entry]:
    """Yield ``(coordinate, value)`` for every stored position, in storage order."""
    level_coords = _positions_and_coords(t)
    for lc, v in zip(level_coords, t.vals):
        coord = [0] * t.order
        for lv, mode in enumerate(t.format.mode_order):
            coord[mode] = int(lc[lv])
        yield tuple(coord), v.item()


def unpack(t: PackedTensor) -> np.ndarray:
    """Expand a packed tensor into a dense row-major array."""
    t.validate()
    dense = np.zeros(t.shape, dtype=t.vals.dtype)
    if t.order == 0:
        if len(t.vals):
            dense[()] = t.vals[0]
        return dense
    level_coords = _positions_and_coords(t)
    if len(level_coords):
        inverse = [t.format.mode_order.index(m) for m in range(t.order)]
        dense[tuple(level_coords[:, inverse].T)] = t.vals
    return dense


def entries_from_dense(array: np.ndarray) -> list[Entry]:
    """Coordinate list of the nonzeros of a dense array (row-major order)."""
    array = np.asarray(array)
    if array.ndim == 0:
        return [((), array.item())] if array.item() != 0 else []
    nz = np.argwhere(array != 0)
    return [(tuple(int(c) for c in idx), array[tuple(idx)].item()) for idx in nz]


def pack_dense(array: np.ndarray, fmt: TensorFormat) -> PackedTensor:
    array = np.asarray(array)
    return pack(entries_from_dense(array), array.shape, fmt, dtype=array.dtype)


def random_entries(shape: Sequence[int], density: float, rng: np.random.Generator,
                   dtype=np.float64) -> list[Entry]:
    """Uniform-random coordinates at roughly ``density``, with nonzero values."""
    shape = tuple(shape)
    total = int(np.prod(shape)) if shape else 1
    count = int(round(density * total))
    count = min(max(count, 0), total)
    flat = np.sort(rng.choice(total, size=count, replace=False)) if count else np.zeros(0, np.int64)
    if np.issubdtype(np.dtype(dtype), np.integer):
        values = rng.integers(1, 10, size=count)
    else:
        values = rng.uniform(0.5, 1.5, size=count)
    coords = np.array(np.unravel_index(flat, shape)).T if shape else np.zeros((count, 0), np.int64)
    return [(tuple(int(c) for c in coord), values[n].item()) for n, coord in enumerate(coords)]
