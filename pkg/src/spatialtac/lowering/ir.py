"""Parallel-pattern intermediate representation.

A :class:`PatternProgram` is a host-side list of DRAM arrays plus an
accelerator body made of pattern nodes: allocations, bulk transfers,
``Foreach`` / ``Reduce`` loops (over counters or bit-vector scans), FIFO
and SRAM accesses, and bit-vector generation. Values inside nodes are small
expression trees (:data:`ValueExpr`).
"""

from __future__ import annotations

import dataclasses
import enum
import json
from typing import Any, Iterator, Union


class MemoryKind(enum.Enum):
    DENSE_DRAM = "DenseDRAM"
    SPARSE_DRAM = "SparseDRAM"
    DENSE_SRAM = "DenseSRAM"
    SPARSE_SRAM = "SparseSRAM"
    FIFO = "FIFO"
    BIT_VECTOR = "BitVectorStream"
    REGISTER = "Register"

    @property
    def off_chip(self) -> bool:
        return self in (MemoryKind.DENSE_DRAM, MemoryKind.SPARSE_DRAM)

    @property
    def is_queue(self) -> bool:
        return self in (MemoryKind.FIFO, MemoryKind.BIT_VECTOR)


# -- value expressions ---------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Const:
    value: int | float


@dataclasses.dataclass(frozen=True)
class Sym:
    """A size or configuration symbol bound at run time (``B1_dim``, ``innerPar``)."""

    name: str


@dataclasses.dataclass(frozen=True)
class Var:
    name: str


@dataclasses.dataclass(frozen=True)
class Read:
    """Read of an SRAM/DRAM cell, or of a register when ``addr`` is None."""

    mem: str
    addr: "ValueExpr | None" = None


@dataclasses.dataclass(frozen=True)
class BinOp:
    op: str  # + - * / (floor division) % min max < <= == != >= and
    a: "ValueExpr"
    b: "ValueExpr"


@dataclasses.dataclass(frozen=True)
class Select:
    cond: "ValueExpr"
    a: "ValueExpr"
    b: "ValueExpr"


@dataclasses.dataclass(frozen=True)
class BitRank:
    """Number of set bits below ``idx`` in ``bv``, or -1 if bit ``idx`` is clear."""

    bv: str
    idx: "ValueExpr"


ValueExpr = Union[Const, Sym, Var, Read, BinOp, Select, BitRank]

ZERO, ONE = Const(0), Const(1)


def _const(x) -> ValueExpr:
    return Const(x) if isinstance(x, (int, float)) else x


def add(a, b) -> ValueExpr:
    a, b = _const(a), _const(b)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(b, Const) and isinstance(a, BinOp) and a.op == "+" and isinstance(a.b, Const):
        return add(a.a, a.b.value + b.value)
    return BinOp("+", a, b)


def sub(a, b) -> ValueExpr:
    a, b = _const(a), _const(b)
    if b == ZERO:
        return a
    if a == b:
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(a, BinOp) and a.op == "+":
        if a.a == b:
            return a.b
        if a.b == b:
            return a.a
    return BinOp("-", a, b)


def mul(a, b) -> ValueExpr:
    a, b = _const(a), _const(b)
    if ZERO in (a, b):
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return BinOp("*", a, b)


def expr_children(e: ValueExpr) -> tuple[ValueExpr, ...]:
    if isinstance(e, BinOp):
        return (e.a, e.b)
    if isinstance(e, Select):
        return (e.cond, e.a, e.b)
    if isinstance(e, Read) and e.addr is not None:
        return (e.addr,)
    if isinstance(e, BitRank):
        return (e.idx,)
    return ()


def expr_reads(e: ValueExpr) -> Iterator[str]:
    """Memories read by ``e`` (including bit vectors ranked)."""
    if isinstance(e, Read):
        yield e.mem
    elif isinstance(e, BitRank):
        yield e.bv
    for c in expr_children(e):
        yield from expr_reads(c)


# -- memories ------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class MemDecl:
    name: str
    kind: MemoryKind
    size: ValueExpr = ONE
    depth: int | None = None
    zero: bool = False  # contents start at zero (output accumulators)


# -- loop headers --------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Counter:
    """``var`` runs over ``start, start+1, ..., start+len-1``."""

    var: str
    len: ValueExpr
    par: str | int = 1
    start: ValueExpr = ZERO
    positions: bool = False  # iterating the positions of a compressed level


@dataclasses.dataclass(frozen=True)
class Scan:
    """Iterate set bits of one bit vector or of the AND/OR of two.

    Per iteration ``pos_vars[k]`` is the rank of the bit in operand ``k``
    (-1 if clear there), ``out_var`` the rank in the combined vector and
    ``idx_var`` the bit index.
    """

    op: str | None  # None for a single scan, else "AND" / "OR"
    bvs: tuple[str, ...]
    extent: ValueExpr
    pos_vars: tuple[str, ...]
    out_var: str
    idx_var: str
    par: str | int = 1


Header = Union[Counter, Scan]


# -- statements ----------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Alloc:
    mem: MemDecl


@dataclasses.dataclass(frozen=True)
class Load:
    """Bulk copy ``src[start:end]`` (DRAM) into on-chip ``dst`` (SRAM from 0, or enqueue)."""

    dst: str
    src: str
    start: ValueExpr
    end: ValueExpr
    par: str | int = 1


@dataclasses.dataclass(frozen=True)
class Store:
    """Bulk copy on-chip ``src[0:end-start]`` to DRAM ``dst[start:end]``."""

    dst: str
    src: str
    start: ValueExpr
    end: ValueExpr
    par: str | int = 1


@dataclasses.dataclass(frozen=True)
class StreamStore:
    """Drain ``length`` elements of the FIFO ``fifo`` into ``dst[base:base+length]``."""

    dst: str
    fifo: str
    base: ValueExpr
    length: ValueExpr


@dataclasses.dataclass(frozen=True)
class Let:
    name: str
    value: ValueExpr


@dataclasses.dataclass(frozen=True)
class Dequeue:
    name: str
    fifo: str


@dataclasses.dataclass(frozen=True)
class Write:
    """``mem(addr) = value``; a register write when ``addr`` is None."""

    mem: str
    addr: ValueExpr | None
    value: ValueExpr


@dataclasses.dataclass(frozen=True)
class Enqueue:
    fifo: str
    value: ValueExpr


@dataclasses.dataclass(frozen=True)
class AtomicUpdate:
    mem: str
    addr: ValueExpr
    value: ValueExpr
    op: str = "+"


@dataclasses.dataclass(frozen=True)
class GenBitVector:
    """Build ``bv`` (``ceil(extent/word)`` words) from ``count`` coordinates.

    Coordinates are dequeued from ``src`` when it is a queue, else read from
    ``src[start : start+count]``.
    """

    bv: str
    src: str
    start: ValueExpr
    count: ValueExpr
    extent: ValueExpr


@dataclasses.dataclass(frozen=True)
class CombineBitVector:
    bv: str
    op: str
    a: str
    b: str
    extent: ValueExpr


@dataclasses.dataclass(frozen=True)
class Foreach:
    header: Header
    body: tuple["Node", ...]


@dataclasses.dataclass(frozen=True)
class Reduce:
    """Fold ``value`` (computed after ``body``) over ``header`` into register ``reg``."""

    reg: str
    header: Header
    body: tuple["Node", ...]
    value: ValueExpr
    combiner: str = "+"


@dataclasses.dataclass(frozen=True)
class If:
    cond: ValueExpr
    body: tuple["Node", ...]


@dataclasses.dataclass(frozen=True)
class Assert:
    cond: ValueExpr
    message: str


Node = Union[Alloc, Load, Store, StreamStore, Let, Dequeue, Write, Enqueue, AtomicUpdate,
             GenBitVector, CombineBitVector, Foreach, Reduce, If, Assert]


@dataclasses.dataclass(frozen=True)
class TensorIO:
    """How a host tensor maps onto DRAM arrays.

    ``dims`` are the size symbols of its modes; ``arrays`` maps
    ``("pos", level)``, ``("crd", level)`` and ``("vals", None)`` (levels
    0-based) to DRAM array names.
    """

    name: str
    levels: tuple[str, ...]  # "U" / "C"
    mode_order: tuple[int, ...]
    dims: tuple[str, ...]
    arrays: tuple[tuple[str, int | None, str], ...]

    def array(self, kind: str, level: int | None = None) -> str:
        for k, lv, name in self.arrays:
            if k == kind and lv == level:
                return name
        raise KeyError((kind, level))


@dataclasses.dataclass(frozen=True)
class PatternProgram:
    name: str
    drams: tuple[MemDecl, ...]
    body: tuple[Node, ...]
    inputs: tuple[TensorIO, ...]
    outputs: tuple[TensorIO, ...]
    dim_aliases: tuple[tuple[str, str], ...] = ()  # (symbol, same-valued input symbol)
    env: tuple[tuple[str, int], ...] = ()
    diagnostics: tuple[str, ...] = ()
    resident: tuple[TensorIO, ...] = ()  # on-chip tensors, arrays named by on-chip memory


def nodes(body: tuple[Node, ...]) -> Iterator[Node]:
    """Pre-order traversal of nested pattern nodes."""
    for n in body:
        yield n
        if isinstance(n, (Foreach, Reduce, If)):
            yield from nodes(n.body)


# -- JSON ----------------------------------------------------------------------------

def to_jsonable(x: Any) -> Any:
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        out = {"node": type(x).__name__}
        for f in dataclasses.fields(x):
            out[f.name] = to_jsonable(getattr(x, f.name))
        return out
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    return x


def dump_json(p: PatternProgram, indent: int | None = 2) -> str:
    return json.dumps(to_jsonable(p), indent=indent, ensure_ascii=False)
