"""Index expressions shared by index notation and concrete index notation."""

from __future__ import annotations

import dataclasses
import enum
from typing import Callable, Iterator

from .tensor import OFF_CHIP, Region, TensorFormat, dense_format


class Provenance(enum.Enum):
    SOURCE = "source"
    SPLIT_OUTER = "split_outer"
    SPLIT_INNER = "split_inner"
    FUSED = "fused"


@dataclasses.dataclass(frozen=True)
class IndexVar:
    name: str
    provenance: Provenance = dataclasses.field(default=Provenance.SOURCE, compare=False)

    def __str__(self) -> str:
        return self.name


def index_vars(names: str) -> tuple[IndexVar, ...]:
    """``i, j, k = index_vars("i j k")``"""
    return tuple(IndexVar(n) for n in names.replace(",", " ").split())


@dataclasses.dataclass(frozen=True)
class TensorVar:
    """A named tensor with a storage format (order is the format's order)."""

    name: str
    format: TensorFormat

    @property
    def order(self) -> int:
        return self.format.order

    @property
    def on_chip(self) -> bool:
        return self.format.on_chip

    def __getitem__(self, idx) -> "Access":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Access(self, tuple(IndexVar(v) if isinstance(v, str) else v for v in idx))

    def __call__(self, *idx) -> "Access":
        return self[tuple(idx)]

    def __str__(self) -> str:
        return self.name


def tensor(name: str, fmt: TensorFormat | None = None, order: int = 0,
           region: Region = OFF_CHIP) -> TensorVar:
    return TensorVar(name, fmt if fmt is not None else dense_format(order, region))


class Expr:
    """Base class of expression nodes; supports ``+``, ``-`` and ``*``."""

    def __add__(self, other):
        return Add(self, _lift(other))

    def __radd__(self, other):
        return Add(_lift(other), self)

    def __sub__(self, other):
        return Sub(self, _lift(other))

    def __rsub__(self, other):
        return Sub(_lift(other), self)

    def __mul__(self, other):
        return Mul(self, _lift(other))

    def __rmul__(self, other):
        return Mul(_lift(other), self)

    def children(self) -> tuple["Expr", ...]:
        return ()


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return Literal(x)
    raise TypeError(f"cannot use {x!r} in an index expression")


@dataclasses.dataclass(frozen=True)
class Access(Expr):
    tensor: TensorVar
    indices: tuple[IndexVar, ...] = ()

    def __post_init__(self):
        if len(self.indices) != self.tensor.order:
            raise ValueError(
                f"{self.tensor.name} has order {self.tensor.order} but is accessed "
                f"with {len(self.indices)} indices")


@dataclasses.dataclass(frozen=True)
class Literal(Expr):
    value: float


@dataclasses.dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr

    def children(self):
        return (self.a, self.b)


@dataclasses.dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr

    def children(self):
        return (self.a, self.b)


@dataclasses.dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr

    def children(self):
        return (self.a, self.b)


BINARY = (Add, Sub, Mul)
_SYMBOL = {Add: "+", Sub: "-", Mul: "*"}
_PREC = {Add: 1, Sub: 1, Mul: 2}


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in e.children():
        yield from walk(c)


def accesses(e: Expr) -> list[Access]:
    return [n for n in walk(e) if isinstance(n, Access)]


def expr_vars(e: Expr) -> list[IndexVar]:
    """Index variables of ``e`` in first-appearance order."""
    seen: list[IndexVar] = []
    for acc in accesses(e):
        for v in acc.indices:
            if v not in seen:
                seen.append(v)
    return seen


def map_expr(e: Expr, fn: Callable[[Expr], Expr | None]) -> Expr:
    """Bottom-up rebuild: ``fn`` may return a replacement or ``None``."""
    hit = fn(e)
    if hit is not None:
        return hit
    if isinstance(e, BINARY):
        return type(e)(map_expr(e.a, fn), map_expr(e.b, fn))
    return e


def replace_subexpr(e: Expr, old: Expr, new: Expr) -> tuple[Expr, int]:
    count = 0

    def fn(node):
        nonlocal count
        if node == old:
            count += 1
            return new
        return None

    return map_expr(e, fn), count


def rename_vars(e: Expr, mapping: dict[IndexVar, IndexVar]) -> Expr:
    def fn(node):
        if isinstance(node, Access):
            return Access(node.tensor, tuple(mapping.get(v, v) for v in node.indices))
        return None

    return map_expr(e, fn)


def contains(e: Expr, sub: Expr) -> bool:
    return any(n == sub for n in walk(e))


def format_access(a: Access) -> str:
    if not a.indices:
        return a.tensor.name
    return f"{a.tensor.name}({','.join(v.name for v in a.indices)})"


def format_expr(e: Expr, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(e, Access):
        return format_access(e)
    if isinstance(e, Literal):
        v = e.value
        return str(v) if isinstance(v, int) else repr(float(v))
    prec = _PREC[type(e)]
    text = f"{format_expr(e.a, prec)} {_SYMBOL[type(e)]} {format_expr(e.b, prec, True)}"
    # right operands of '-' and same-precedence right operands need parentheses
    if prec < parent_prec or (right and prec == parent_prec):
        return f"({text})"
    return text
