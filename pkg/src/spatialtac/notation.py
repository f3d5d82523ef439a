"""Tensor index notation: parsing, pretty printing and conversion to CIN.

Grammar::

    assignment := access ('=' | '+=') expr
    access     := IDENT [ '(' [IDENT (',' IDENT)*] ')' ]
    expr       := term (('+' | '-') term)*
    term       := factor ('*' factor)*
    factor     := NUMBER | '-' NUMBER | access | '(' expr ')'

A bare identifier is an order-0 tensor; on the right-hand side this is how
scalar parameters such as ``alpha`` are written. Their values are supplied
at run time like any other input.
"""

from __future__ import annotations

import dataclasses
from typing import Mapping, Sequence

from .cin.stmt import Forall, Increment, Assign, Stmt, Where
from .expr import (BINARY, Access, Expr, IndexVar, TensorVar, accesses, expr_vars,
                   format_access, format_expr)
from .syntax import NotationError, Parser
from .tensor import ON_CHIP, TensorFormat, scalar_format


@dataclasses.dataclass(frozen=True)
class Assignment:
    lhs: Access
    rhs: Expr
    accumulate: bool = False

    def __post_init__(self):
        if len(set(self.lhs.indices)) != len(self.lhs.indices):
            raise NotationError(f"repeated index on the left-hand side of {self}")
        free = set(expr_vars(self.rhs))
        missing = [v.name for v in self.lhs.indices if v not in free]
        if missing:
            raise NotationError(
                f"left-hand index {', '.join(missing)} does not appear on the right")

    @property
    def reduction_vars(self) -> tuple[IndexVar, ...]:
        return tuple(v for v in expr_vars(self.rhs) if v not in self.lhs.indices)

    @property
    def index_vars(self) -> tuple[IndexVar, ...]:
        return tuple(self.lhs.indices) + self.reduction_vars

    def tensors(self) -> dict[str, TensorVar]:
        out = {self.lhs.tensor.name: self.lhs.tensor}
        for acc in accesses(self.rhs):
            out.setdefault(acc.tensor.name, acc.tensor)
        return out

    def __str__(self) -> str:
        return pretty_print(self)


def assign(lhs: Access, rhs: Expr) -> Assignment:
    """Builder form of ``lhs = rhs``."""
    return Assignment(lhs, rhs)


def accumulate(lhs: Access, rhs: Expr) -> Assignment:
    return Assignment(lhs, rhs, accumulate=True)


def pretty_print(a: Assignment) -> str:
    op = "+=" if a.accumulate else "="
    return f"{format_access(a.lhs)} {op} {format_expr(a.rhs)}"


def parse_expression(text: str,
                     tensors: Mapping[str, TensorVar | TensorFormat] | None = None) -> Assignment:
    """Parse ``text`` into an :class:`Assignment`.

    ``tensors`` optionally maps names to tensor variables or formats; other
    tensors default to dense off-chip formats of the arity they are used with.
    """
    p = Parser(text, tensors)
    lhs = p.access()
    op = p.take()
    if op[1] not in ("=", "+="):
        raise NotationError(f"expected '=' or '+=', got {op[1]!r}", op[2])
    rhs = p.expr()
    end = p.peek()
    if end[0] != "end":
        raise NotationError(f"unexpected {end[1]!r}", end[2])
    try:
        return Assignment(lhs, rhs, accumulate=op[1] == "+=")
    except NotationError as err:
        raise NotationError(str(err), 0) from None


# --- conversion to concrete index notation ---------------------------------

ExprPath = tuple[int, ...]


def _subexpr(e: Expr, path: ExprPath) -> Expr:
    for k in path:
        e = e.children()[k]
    return e


def _replace_path(e: Expr, path: ExprPath, new: Expr) -> Expr:
    if not path:
        return new
    kids = list(e.children())
    kids[path[0]] = _replace_path(kids[path[0]], path[1:], new)
    return type(e)(*kids)


def _access_paths(e: Expr, path: ExprPath = ()) -> list[tuple[ExprPath, Access]]:
    if isinstance(e, Access):
        return [(path, e)]
    out = []
    for k, c in enumerate(e.children()):
        out.extend(_access_paths(c, path + (k,)))
    return out


def _common_prefix(paths: Sequence[ExprPath]) -> ExprPath:
    first = paths[0]
    n = len(first)
    for p in paths[1:]:
        n = min(n, len(p))
        for d in range(n):
            if p[d] != first[d]:
                n = d
                break
    return first[:n]


def reduction_scopes(rhs: Expr, reduction_vars: Sequence[IndexVar]) -> dict[IndexVar, ExprPath]:
    """Path of the smallest subexpression containing every use of each variable."""
    uses = _access_paths(rhs)
    out = {}
    for v in reduction_vars:
        paths = [p for p, acc in uses if v in acc.indices]
        out[v] = _common_prefix(paths)
    return out


def _is_ancestor(a: ExprPath, b: ExprPath) -> bool:
    return len(a) < len(b) and b[:len(a)] == a


def _wrap(loop_vars: Sequence[IndexVar], body: Stmt) -> Stmt:
    for v in reversed(loop_vars):
        body = Forall(v, body)
    return body


def _temp_name(owned: Sequence[IndexVar], taken: set[str]) -> str:
    base = "t" + "".join(v.name for v in owned)
    name, n = base, 1
    while name in taken:
        n += 1
        name = f"{base}{n}"
    taken.add(name)
    return name


def _build(lhs: Access, rhs: Expr, reduce_vars: Sequence[IndexVar], increment: bool,
           order: Sequence[IndexVar], taken: set[str]) -> Stmt:
    scopes = reduction_scopes(rhs, reduce_vars)
    inner = sorted({p for p in scopes.values() if p}, key=len)
    maximal = [p for p in inner if not any(_is_ancestor(q, p) for q in inner)]
    producers = []
    # replace deepest-first so earlier paths stay valid
    for path in sorted(maximal, reverse=True):
        owned = [v for v in reduce_vars if scopes[v] == path or _is_ancestor(path, scopes[v])]
        temp = TensorVar(_temp_name(owned, taken), scalar_format(ON_CHIP))
        sub = _subexpr(rhs, path)
        producers.append(_build(Access(temp), sub, owned, True,
                                [v for v in order if v in owned], taken))
        rhs = _replace_path(rhs, path, Access(temp))
    local = [v for v in reduce_vars if scopes[v] == ()]
    loop_vars = [v for v in order if v in lhs.indices or v in local]
    body: Stmt = (Increment if (increment or local) else Assign)(lhs, rhs)
    for prod in reversed(producers):
        body = Where(body, prod)
    return _wrap(loop_vars, body)


def to_cin(a: Assignment, loop_order: Sequence[IndexVar | str] | None = None) -> Stmt:
    """Concrete index notation for ``a`` with foralls in ``loop_order``.

    The default order is the left-hand indices followed by the reduction
    variables in order of first appearance. A reduction whose variable is
    confined to a proper subexpression (as in ``b(i) - A(i,j) * x(j)``) is
    computed into a scalar temporary inside a ``where``.
    """
    all_vars = list(a.index_vars)
    if loop_order is None:
        order = all_vars
    else:
        order = [IndexVar(v) if isinstance(v, str) else v for v in loop_order]
        missing = [v.name for v in all_vars if v not in order]
        extra = [v.name for v in order if v not in all_vars]
        if missing:
            raise NotationError(f"loop_order missing variable(s) {', '.join(missing)}")
        if extra or len(set(order)) != len(order):
            raise NotationError(f"loop_order is not a permutation of {[v.name for v in all_vars]}")
    taken = set(a.tensors())
    return _build(a.lhs, a.rhs, list(a.reduction_vars), a.accumulate, order, taken)


__all__ = [
    "Assignment", "NotationError", "accumulate", "assign", "parse_expression",
    "pretty_print", "reduction_scopes", "to_cin", "BINARY",
]
