"""Concrete index notation statements and scheduling relations."""

from __future__ import annotations

import dataclasses
from typing import Callable, Iterator, Union

from ..expr import Access, Expr, IndexVar, TensorVar, accesses


class Stmt:
    def children(self) -> tuple["Stmt", ...]:
        return ()

    def with_children(self, kids: tuple["Stmt", ...]) -> "Stmt":
        return self

    def __str__(self) -> str:
        from .printer import format_stmt
        return format_stmt(self)


@dataclasses.dataclass(frozen=True, eq=True)
class Forall(Stmt):
    var: IndexVar
    body: Stmt

    def children(self):
        return (self.body,)

    def with_children(self, kids):
        return Forall(self.var, kids[0])


@dataclasses.dataclass(frozen=True, eq=True)
class Assign(Stmt):
    lhs: Access
    rhs: Expr


@dataclasses.dataclass(frozen=True, eq=True)
class Increment(Stmt):
    lhs: Access
    rhs: Expr


@dataclasses.dataclass(frozen=True, eq=True)
class Sequence(Stmt):
    first: Stmt
    second: Stmt

    def children(self):
        return (self.first, self.second)

    def with_children(self, kids):
        return Sequence(*kids)


@dataclasses.dataclass(frozen=True, eq=True)
class Where(Stmt):
    consumer: Stmt
    producer: Stmt

    def children(self):
        return (self.consumer, self.producer)

    def with_children(self, kids):
        return Where(*kids)


@dataclasses.dataclass(frozen=True)
class SplitUp:
    """``i = io * c + ii`` with ``ii`` ranging over ``c``."""

    i: IndexVar
    io: IndexVar
    ii: IndexVar
    c: int


@dataclasses.dataclass(frozen=True)
class SplitDown:
    """``io`` ranges over ``c``; ``i = io * ceil(N / c) + ii``."""

    i: IndexVar
    io: IndexVar
    ii: IndexVar
    c: int


@dataclasses.dataclass(frozen=True)
class Fuse:
    io: IndexVar
    ii: IndexVar
    f: IndexVar


@dataclasses.dataclass(frozen=True)
class MapTag:
    backend: str
    func: str


@dataclasses.dataclass(frozen=True)
class EnvBinding:
    var: str
    value: int


Relation = Union[SplitUp, SplitDown, Fuse, MapTag, EnvBinding]


@dataclasses.dataclass(frozen=True, eq=True)
class SuchThat(Stmt):
    body: Stmt
    relations: tuple[Relation, ...]

    def children(self):
        return (self.body,)

    def with_children(self, kids):
        return SuchThat(kids[0], self.relations)


@dataclasses.dataclass(frozen=True)
class Scope:
    """Index variables, relations and environment visible at a mapped site."""

    index_vars: tuple[IndexVar, ...] = ()
    relations: tuple[Relation, ...] = ()


@dataclasses.dataclass(frozen=True, eq=True)
class MappedCall(Stmt):
    """A statement replaced by a backend function ``func(tensors, V, const)``.

    ``original`` keeps the replaced statement so reference semantics and
    lowering can recover the computation.
    """

    backend: str
    func: str
    tensors: tuple[TensorVar, ...]
    const: int | str | None
    original: Stmt
    scope: Scope = dataclasses.field(default=Scope(), compare=False)


Path = tuple[int, ...]


def get_at(s: Stmt, path: Path) -> Stmt:
    for k in path:
        s = s.children()[k]
    return s


def replace_at(s: Stmt, path: Path, new: Stmt) -> Stmt:
    if not path:
        return new
    kids = list(s.children())
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return s.with_children(tuple(kids))


def walk(s: Stmt, path: Path = ()) -> Iterator[tuple[Path, Stmt]]:
    """Pre-order traversal yielding ``(path, node)``; mapped originals are opaque."""
    yield path, s
    for k, child in enumerate(s.children()):
        yield from walk(child, path + (k,))


def enclosing_foralls(s: Stmt, path: Path) -> list[tuple[Path, Forall]]:
    out = []
    node = s
    for depth, k in enumerate(path):
        if isinstance(node, Forall):
            out.append((path[:depth], node))
        node = node.children()[k]
    return out


def map_stmt_tree(s: Stmt, fn: Callable[[Stmt], Stmt | None]) -> Stmt:
    hit = fn(s)
    if hit is not None:
        return hit
    kids = s.children()
    if not kids:
        return s
    return s.with_children(tuple(map_stmt_tree(k, fn) for k in kids))


def assignments(s: Stmt, into_mapped: bool = True) -> list[Assign | Increment]:
    out: list[Assign | Increment] = []
    for _, node in walk(s):
        if isinstance(node, (Assign, Increment)):
            out.append(node)
        elif isinstance(node, MappedCall) and into_mapped:
            out.extend(assignments(node.original))
    return out


def stmt_accesses(s: Stmt) -> list[Access]:
    """Every access (lhs first, then rhs) in traversal order."""
    out: list[Access] = []
    for a in assignments(s):
        out.append(a.lhs)
        out.extend(accesses(a.rhs))
    return out


def stmt_tensors(s: Stmt) -> list[TensorVar]:
    seen: dict[str, TensorVar] = {}
    for acc in stmt_accesses(s):
        seen.setdefault(acc.tensor.name, acc.tensor)
    return list(seen.values())


def written_tensors(s: Stmt) -> list[TensorVar]:
    seen: dict[str, TensorVar] = {}
    for a in assignments(s):
        seen.setdefault(a.lhs.tensor.name, a.lhs.tensor)
    return list(seen.values())


def relation_vars(r: Relation) -> tuple[IndexVar, ...]:
    if isinstance(r, (SplitUp, SplitDown)):
        return (r.i, r.io, r.ii)
    if isinstance(r, Fuse):
        return (r.io, r.ii, r.f)
    return ()


def stmt_vars(s: Stmt) -> list[IndexVar]:
    """All index variables bound by foralls or used by accesses."""
    seen: list[IndexVar] = []

    def add(v):
        if v not in seen:
            seen.append(v)

    for _, node in walk(s):
        if isinstance(node, Forall):
            add(node.var)
        elif isinstance(node, MappedCall):
            for v in stmt_vars(node.original):
                add(v)
        elif isinstance(node, SuchThat):
            for r in node.relations:
                for v in relation_vars(r):
                    add(v)
    for acc in stmt_accesses(s):
        for v in acc.indices:
            add(v)
    return seen


def split_root(s: Stmt) -> tuple[Stmt, tuple[Relation, ...]]:
    """Separate the root ``s.t.`` (if any) from the statement body."""
    if isinstance(s, SuchThat):
        return s.body, s.relations
    return s, ()


def with_root(body: Stmt, relations: tuple[Relation, ...]) -> Stmt:
    return SuchThat(body, tuple(relations)) if relations else body


def env_bindings(s: Stmt) -> dict[str, int]:
    _, rels = split_root(s)
    return {r.var: r.value for r in rels if isinstance(r, EnvBinding)}


def schedule_relations(s: Stmt) -> list[Relation]:
    _, rels = split_root(s)
    return [r for r in rels if isinstance(r, (SplitUp, SplitDown, Fuse))]
