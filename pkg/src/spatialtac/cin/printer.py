"""Textual form of concrete index notation, its parser, and α-equivalence.

The surface syntax::

    forall(i, S)                     loop
    A(i,j) = e   |   A(i,j) += e     assignment / increment
    (S ; S)                          sequence
    (S where S)                      consumer where producer
    (S s.t. r, r, ...)               relations and environment bindings
    f(a, b, c; const) s.t. map(backend, f) [S]
                                     a mapped backend call; S is the
                                     statement it replaced
"""

from __future__ import annotations

import re
from typing import Mapping

from ..expr import Access, IndexVar, TensorVar, format_access, format_expr, rename_vars
from ..syntax import NotationError, Parser
from .stmt import (Assign, EnvBinding, Forall, Fuse, Increment, MapTag, MappedCall, Relation,
                   Sequence, SplitDown, SplitUp, Stmt, SuchThat, Where, map_stmt_tree,
                   relation_vars, walk, stmt_accesses)


def format_relation(r: Relation) -> str:
    if isinstance(r, SplitUp):
        return f"split_up({r.i}, {r.io}, {r.ii}, {r.c})"
    if isinstance(r, SplitDown):
        return f"split_down({r.i}, {r.io}, {r.ii}, {r.c})"
    if isinstance(r, Fuse):
        return f"fuse({r.io}, {r.ii}, {r.f})"
    if isinstance(r, MapTag):
        return f"map({r.backend}, {r.func})"
    if isinstance(r, EnvBinding):
        return f"{r.var} = {r.value}"
    raise TypeError(f"not a relation: {r!r}")


def format_stmt(s: Stmt) -> str:
    if isinstance(s, Forall):
        return f"forall({s.var}, {format_stmt(s.body)})"
    if isinstance(s, Assign):
        return f"{format_access(s.lhs)} = {format_expr(s.rhs)}"
    if isinstance(s, Increment):
        return f"{format_access(s.lhs)} += {format_expr(s.rhs)}"
    if isinstance(s, Sequence):
        return f"({format_stmt(s.first)} ; {format_stmt(s.second)})"
    if isinstance(s, Where):
        return f"({format_stmt(s.consumer)} where {format_stmt(s.producer)})"
    if isinstance(s, SuchThat):
        rels = ", ".join(format_relation(r) for r in s.relations)
        return f"({format_stmt(s.body)} s.t. {rels})"
    if isinstance(s, MappedCall):
        args = ", ".join(t.name for t in s.tensors)
        if s.const is not None:
            args += f"; {s.const}"
        return (f"{s.func}({args}) s.t. {format_relation(MapTag(s.backend, s.func))} "
                f"[{format_stmt(s.original)}]")
    raise TypeError(f"not a statement: {s!r}")


_CIN_TOKEN = re.compile(
    r"\s*(?:(?P<op>s\.t\.|\+=|[=+\-*(),;\[\]])"
    r"|(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\d*\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_]\w*))")


class _CinParser(Parser):
    def __init__(self, text: str, tensors):
        super().__init__(text, tensors, _CIN_TOKEN)

    def stmt(self) -> Stmt:
        kind, value, pos = self.peek()
        if value == "(":
            self.take("(")
            first = self.stmt()
            sep = self.take()[1]
            if sep == ";":
                node: Stmt = Sequence(first, self.stmt())
            elif sep == "where":
                node = Where(first, self.stmt())
            elif sep == "s.t.":
                rels = [self.relation()]
                while self.peek()[1] == ",":
                    self.take(",")
                    rels.append(self.relation())
                node = SuchThat(first, tuple(rels))
            else:
                raise NotationError(f"expected ';', 'where' or 's.t.', got {sep!r}", pos)
            self.take(")")
            return node
        if kind != "id":
            raise NotationError(f"expected a statement, got {value or 'end of input'!r}", pos)
        if value == "forall" and self.toks[self.k + 1][1] == "(":
            self.take("forall")
            self.take("(")
            var = IndexVar(self.take(kind="id")[1])
            self.take(",")
            body = self.stmt()
            self.take(")")
            return Forall(var, body)
        if self._looks_mapped():
            return self.mapped()
        lhs = self.access()
        op = self.take()[1]
        if op not in ("=", "+="):
            raise NotationError(f"expected '=' or '+=', got {op!r}", pos)
        rhs = self.expr()
        return (Assign if op == "=" else Increment)(lhs, rhs)

    def _looks_mapped(self) -> bool:
        # f(args; c) s.t. map(...)  versus an assignment  A(i,j) = ...
        k, depth = self.k + 1, 0
        if self.toks[k][1] != "(":
            return False
        while k < len(self.toks):
            v = self.toks[k][1]
            depth += v == "("
            depth -= v == ")"
            if depth == 0:
                return self.toks[k + 1][1] == "s.t."
            k += 1
        return False

    def mapped(self) -> MappedCall:
        func = self.take(kind="id")[1]
        self.take("(")
        names: list[str] = []
        const: int | str | None = None
        while self.peek()[1] not in (")", ";"):
            names.append(self.take(kind="id")[1])
            if self.peek()[1] == ",":
                self.take(",")
        if self.peek()[1] == ";":
            self.take(";")
            tok = self.take()
            const = int(tok[1]) if tok[0] == "num" else tok[1]
        self.take(")")
        self.take("s.t.")
        tag = self.relation()
        if not isinstance(tag, MapTag) or tag.func != func:
            raise NotationError(f"mapped call {func} needs a matching map(backend, {func}) tag")
        self.take("[")
        original = self.stmt()
        self.take("]")
        table = {t.name: t for t in (a.tensor for a in stmt_accesses(original))}
        try:
            tensors = tuple(table[n] for n in names)
        except KeyError as err:
            raise NotationError(f"mapped argument {err.args[0]} not used by the statement") from None
        return MappedCall(tag.backend, func, tensors, const, original)

    def relation(self) -> Relation:
        _, name, pos = self.take(kind="id")
        if self.peek()[1] == "=":
            self.take("=")
            return EnvBinding(name, int(self.take(kind="num")[1]))
        self.take("(")
        args = [self.take()[1]]
        while self.peek()[1] == ",":
            self.take(",")
            args.append(self.take()[1])
        self.take(")")
        v = [IndexVar(a) for a in args]
        if name in ("split_up", "split_down") and len(args) == 4:
            return (SplitUp if name == "split_up" else SplitDown)(v[0], v[1], v[2], int(args[3]))
        if name == "fuse" and len(args) == 3:
            return Fuse(v[0], v[1], v[2])
        if name == "map" and len(args) == 2:
            return MapTag(args[0], args[1])
        raise NotationError(f"unknown relation {name}({', '.join(args)})", pos)


def parse_stmt(text: str, tensors: Mapping[str, TensorVar] | None = None) -> Stmt:
    """Parse the textual CIN produced by :func:`format_stmt`."""
    p = _CinParser(text, tensors)
    s = p.stmt()
    end = p.peek()
    if end[0] != "end":
        raise NotationError(f"unexpected {end[1]!r}", end[2])
    return s


def rename_index_vars(s: Stmt, mapping: Mapping[IndexVar, IndexVar]) -> Stmt:
    def r(v: IndexVar) -> IndexVar:
        return mapping.get(v, v)

    def rel(x: Relation) -> Relation:
        if isinstance(x, (SplitUp, SplitDown)):
            return type(x)(r(x.i), r(x.io), r(x.ii), x.c)
        if isinstance(x, Fuse):
            return Fuse(r(x.io), r(x.ii), r(x.f))
        return x

    def fn(node: Stmt):
        if isinstance(node, Forall):
            return Forall(r(node.var), rename_index_vars(node.body, mapping))
        if isinstance(node, (Assign, Increment)):
            lhs = Access(node.lhs.tensor, tuple(r(v) for v in node.lhs.indices))
            return type(node)(lhs, rename_vars(node.rhs, dict(mapping)))
        if isinstance(node, SuchThat):
            return SuchThat(rename_index_vars(node.body, mapping),
                            tuple(rel(x) for x in node.relations))
        if isinstance(node, MappedCall):
            return MappedCall(node.backend, node.func, node.tensors, node.const,
                              rename_index_vars(node.original, mapping), node.scope)
        return None

    return map_stmt_tree(s, fn)


def _vars_in_print_order(s: Stmt) -> list[IndexVar]:
    seen: list[IndexVar] = []

    def add(v):
        if v not in seen:
            seen.append(v)

    def visit(node: Stmt):
        if isinstance(node, Forall):
            add(node.var)
            visit(node.body)
        elif isinstance(node, (Assign, Increment)):
            for acc in [node.lhs] + [a for _, a in _accs(node.rhs)]:
                for v in acc.indices:
                    add(v)
        elif isinstance(node, MappedCall):
            visit(node.original)
        else:
            for c in node.children():
                visit(c)
            if isinstance(node, SuchThat):
                for r in node.relations:
                    for v in relation_vars(r):
                        add(v)

    visit(s)
    return seen


def _accs(e):
    from ..expr import walk as ewalk
    return [(None, n) for n in ewalk(e) if isinstance(n, Access)]


def alpha_normalize(s: Stmt) -> Stmt:
    """Rename index variables to ``_0, _1, ...`` in order of first appearance."""
    order = _vars_in_print_order(s)
    return rename_index_vars(s, {v: IndexVar(f"_{n}") for n, v in enumerate(order)})


def alpha_equal(a: Stmt, b: Stmt) -> bool:
    return format_stmt(alpha_normalize(a)) == format_stmt(alpha_normalize(b))


__all__ = ["format_stmt", "format_relation", "parse_stmt", "alpha_normalize", "alpha_equal",
           "rename_index_vars", "walk"]
