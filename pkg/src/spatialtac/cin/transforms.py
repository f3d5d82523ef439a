"""Scheduling transformations on concrete index notation.

Every command is a pure function from statement to statement. Relations
(splits, fusions) and environment bindings are collected in a single
``s.t.`` at the statement root.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Sequence

from ..expr import (Access, Expr, IndexVar, Provenance, TensorVar, accesses, contains, expr_vars,
                    rename_vars, replace_subexpr)
from ..tensor import ON_CHIP, TensorFormat
from .backend import lookup
from .printer import alpha_equal, format_stmt
from .stmt import (Assign, EnvBinding, Forall, Fuse, Increment, MappedCall, Path, Relation, Scope,
                   SplitDown, SplitUp, Stmt, SuchThat, Where, enclosing_foralls, get_at,
                   replace_at, split_root, stmt_tensors, stmt_vars, walk, with_root)


class ScheduleError(ValueError):
    pass


def _var(v: IndexVar | str) -> IndexVar:
    return IndexVar(v) if isinstance(v, str) else v


def _vars(vs: Sequence[IndexVar | str]) -> list[IndexVar]:
    return [_var(v) for v in vs]


def add_relation(s: Stmt, r: Relation) -> Stmt:
    body, rels = split_root(s)
    return SuchThat(body, rels + (r,))


def _chain_above(body: Stmt, path: Path) -> list[tuple[Path, Forall]]:
    """Foralls directly nested above ``path`` (outermost first)."""
    chain = []
    p = path
    while p and isinstance(get_at(body, p[:-1]), Forall):
        p = p[:-1]
        chain.append((p, get_at(body, p)))
    chain.reverse()
    return chain


def _wrap(loop_vars: Sequence[IndexVar], body: Stmt) -> Stmt:
    for v in reversed(loop_vars):
        body = Forall(v, body)
    return body


def _peel(s: Stmt) -> tuple[list[IndexVar], Stmt]:
    loops = []
    while isinstance(s, Forall):
        loops.append(s.var)
        s = s.body
    return loops, s


# -- precompute ---------------------------------------------------------------

def precompute(s: Stmt, e: Expr, i_vars: Sequence[IndexVar | str],
               iw_vars: Sequence[IndexVar | str], T: TensorVar,
               bound: Sequence[IndexVar] = ()) -> Stmt:
    """Compute ``e`` into the temporary ``T`` inside a ``where``.

    The consumer reads ``T(i_vars)``; the producer is
    ``forall(iw_vars) T(iw_vars) = e[iw_vars/i_vars]``. Reduction variables of
    the enclosing assignment that occur only inside ``e`` move with it into
    the producer, which then accumulates. The ``where`` is placed above the
    outermost loop over a precomputed variable; with none, it is hoisted
    above the innermost loops that ``e`` does not depend on. ``bound`` lists
    variables bound outside ``s`` (when ``s`` is a substatement).
    """
    i_vars, iw_vars = _vars(i_vars), _vars(iw_vars)
    if len(i_vars) != len(iw_vars):
        raise ScheduleError(f"precompute needs as many workspace variables as "
                            f"precomputed ones ({len(i_vars)} vs {len(iw_vars)})")
    if T.order != len(i_vars):
        raise ScheduleError(f"temporary {T.name} has order {T.order} but is indexed by "
                            f"{len(i_vars)} variables")
    body, rels = split_root(s)
    site = next((p for p, n in walk(body)
                 if isinstance(n, (Assign, Increment)) and contains(n.rhs, e)), None)
    if site is None:
        from ..expr import format_expr
        raise ScheduleError(f"expression {format_expr(e)} not found in the statement")
    stmt = get_at(body, site)
    chain = _chain_above(body, site)
    chain_vars = [f.var for _, f in chain]
    for v in i_vars:
        if v not in chain_vars:
            raise ScheduleError(f"{v} is not a loop directly enclosing the precomputed expression")

    new_rhs, _ = replace_subexpr(stmt.rhs, e, Access(T, tuple(i_vars)))
    remaining = set(expr_vars(new_rhs)) | set(stmt.lhs.indices)
    e_vars = expr_vars(e)
    moved = [v for v in chain_vars if v in e_vars and v not in remaining and v not in i_vars]

    P = set(i_vars) | set(moved)
    if P:
        place = min(chain_vars.index(v) for v in P)
    else:
        place = len(chain)
        while place > 0 and chain_vars[place - 1] not in e_vars:
            place -= 1
    outer = ({f.var for _, f in enclosing_foralls(body, site)} - set(chain_vars[place:])) | set(bound)
    unbound = [v for v in e_vars if v not in P and v not in outer]
    if unbound:
        raise ScheduleError(f"precompute would leave {', '.join(map(str, unbound))} unbound in "
                            f"the producer; reorder the loops first")

    consumer_loops = [v for v in chain_vars[place:] if v not in moved]
    enclosing = set(outer) | set(consumer_loops)
    still_reduces = any(v not in stmt.lhs.indices for v in enclosing)
    op = Increment if isinstance(stmt, Increment) and still_reduces else Assign
    consumer = _wrap(consumer_loops, op(stmt.lhs, new_rhs))

    rename = dict(zip(i_vars, iw_vars))
    prod_op = Increment if moved else Assign
    producer = _wrap(iw_vars + moved, prod_op(Access(T, tuple(iw_vars)), rename_vars(e, rename)))

    at = chain[place][0] if place < len(chain) else site
    return with_root(replace_at(body, at, Where(consumer, producer)), rels)


# -- loop transformations ---------------------------------------------------------

def _fresh(s: Stmt, *names: IndexVar) -> None:
    used = set(stmt_vars(s))
    for v in names:
        if v in used:
            raise ScheduleError(f"index variable {v} is already used in the statement")
    if len(set(names)) != len(names):
        raise ScheduleError("derived variable names must be distinct")


def _find_forall(body: Stmt, var: IndexVar) -> Path:
    for p, n in walk(body):
        if isinstance(n, Forall) and n.var == var:
            return p
    raise ScheduleError(f"no forall over {var}")


def split(s: Stmt, i, io, ii, c: int, direction: str = "up") -> Stmt:
    """Strip-mine ``forall(i)`` into ``forall(io, forall(ii))``.

    ``up`` gives the inner loop the constant extent ``c``; ``down`` gives
    it to the outer loop.
    """
    i, io, ii = _var(i), _var(io), _var(ii)
    if direction not in ("up", "down"):
        raise ScheduleError(f"split direction must be 'up' or 'down', not {direction!r}")
    if not isinstance(c, int) or c < 1:
        raise ScheduleError(f"split factor must be a positive integer, got {c!r}")
    body, rels = split_root(s)
    path = _find_forall(body, i)
    _fresh(s, io, ii)
    io = IndexVar(io.name, Provenance.SPLIT_OUTER)
    ii = IndexVar(ii.name, Provenance.SPLIT_INNER)
    loop = get_at(body, path)
    body = replace_at(body, path, Forall(io, Forall(ii, loop.body)))
    rel = (SplitUp if direction == "up" else SplitDown)(i, io, ii, c)
    return SuchThat(body, rels + (rel,))


def split_up(s: Stmt, i, io, ii, c: int) -> Stmt:
    return split(s, i, io, ii, c, "up")


def split_down(s: Stmt, i, io, ii, c: int) -> Stmt:
    return split(s, i, io, ii, c, "down")


def fuse(s: Stmt, io, ii, f) -> Stmt:
    io, ii, f = _var(io), _var(ii), _var(f)
    body, rels = split_root(s)
    path = _find_forall(body, io)
    outer = get_at(body, path)
    if not (isinstance(outer.body, Forall) and outer.body.var == ii):
        raise ScheduleError(f"forall({io}) and forall({ii}) are not perfectly nested")
    _fresh(s, f)
    f = IndexVar(f.name, Provenance.FUSED)
    body = replace_at(body, path, Forall(f, outer.body.body))
    return SuchThat(body, rels + (Fuse(io, ii, f),))


def reorder(s: Stmt, order: Sequence[IndexVar | str]) -> Stmt:
    """Permute a perfectly nested chain of foralls into ``order``."""
    order = _vars(order)
    if len(set(order)) != len(order):
        raise ScheduleError("reorder needs distinct variables")
    body, rels = split_root(s)
    for p, n in walk(body):
        if isinstance(n, Forall) and n.var in order:
            path, top = p, n
            break
    else:
        raise ScheduleError(f"no forall over any of {', '.join(map(str, order))}")
    loops, node = [], top
    while isinstance(node, Forall) and len(loops) < len(order):
        loops.append(node.var)
        node = node.body
    if set(loops) != set(order):
        raise ScheduleError(f"foralls {', '.join(map(str, order))} are not a perfectly nested "
                            f"chain (found {', '.join(map(str, loops))})")
    return with_root(replace_at(body, path, _wrap(order, node)), rels)


# -- mapping and acceleration ----------------------------------------------------

def find_substmt(s: Stmt, target: Stmt) -> Path:
    """Path of the first substatement α-equivalent to ``target``."""
    text = format_stmt(target)
    for p, n in walk(s):
        if type(n) is type(target) and (n == target or alpha_equal(n, target)):
            return p
    raise ScheduleError(f"statement {text} not found")


def _scope(body: Stmt, path: Path, rels: tuple[Relation, ...]) -> Scope:
    loops = tuple(f.var for _, f in enclosing_foralls(body, path))
    return Scope(loops, tuple(rels))


def _mapped(body: Stmt, path: Path, rels, backend: str, f: str, c) -> MappedCall:
    try:
        func = lookup(backend, f)
    except KeyError as err:
        raise ScheduleError(str(err.args[0])) from None
    target = get_at(body, path)
    tensors = tuple(stmt_tensors(target))
    off = [t.name for t in tensors if not t.on_chip]
    if off:
        raise ScheduleError(f"cannot map a statement reading off-chip tensor(s) "
                            f"{', '.join(off)}; precompute them on-chip first")
    try:
        func.check_arity(len(tensors))
    except ValueError as err:
        raise ScheduleError(str(err)) from None
    return MappedCall(backend, f, tensors, c, target, _scope(body, path, rels))


def map_stmt(s: Stmt, target: Stmt, backend: str, f: str, c: int | str | None = None) -> Stmt:
    body, rels = split_root(s)
    path = find_substmt(body, target)
    call = _mapped(body, path, rels, backend, f, c)
    return with_root(replace_at(body, path, call), rels)


def slice_format(fmt: TensorFormat, modes: Sequence[int], region=ON_CHIP) -> TensorFormat:
    """Format of the sub-tensor spanned by ``modes`` (in access order)."""
    levels = [fmt.level_of_mode(m) for m in modes]
    by_level = sorted(range(len(modes)), key=lambda n: levels[n])
    return TensorFormat(tuple(fmt.levels[levels[n]] for n in by_level), tuple(by_level), region)


def _fresh_tensor(s: Stmt, base: str) -> str:
    taken = {t.name for t in stmt_tensors(s)}
    name, n = base, 1
    while name in taken:
        n += 1
        name = f"{base}{n}"
    return name


def _compute_path(W: Stmt, lhs_name: str) -> Path:
    """Top of the forall chain around the (consumer-side) assignment to ``lhs_name``."""
    for p, n in walk(W):
        if isinstance(n, (Assign, Increment)) and n.lhs.tensor.name == lhs_name:
            chain = _chain_above(W, p)
            return chain[0][0] if chain else p
    raise ScheduleError(f"lost track of the assignment to {lhs_name}")


def accelerate(s: Stmt, target: Stmt, backend: str, f: str, c: int | str | None = None) -> Stmt:
    """Move every off-chip operand of ``target`` on-chip, then map it.

    The output is first computed into an on-chip temporary (if off-chip),
    then each off-chip tensor read by the computation is copied into an
    on-chip tensor over the variables that the target's loops bind, and
    finally the all-on-chip statement is mapped to ``backend.f``.
    """
    body, rels = split_root(s)
    path = find_substmt(body, target)
    W = get_at(body, path)
    loops, inner = _peel(W)
    if not isinstance(inner, (Assign, Increment)):
        raise ScheduleError("accelerate needs a forall nest around a single assignment")
    taken: Stmt = body
    lhs = inner.lhs
    if not lhs.tensor.on_chip:
        lhs_vars = [v for v in lhs.indices if v in loops]
        modes = [lhs.indices.index(v) for v in lhs_vars]
        a_on = TensorVar(_fresh_tensor(taken, lhs.tensor.name + "_on"),
                         slice_format(lhs.tensor.format, modes))
        W = precompute(W, inner.rhs, lhs_vars, lhs_vars, a_on,
                       [f.var for _, f in enclosing_foralls(body, path)])
        lhs = Access(a_on, tuple(lhs_vars))
        taken = Where(taken, W)
    cpath = _compute_path(W, lhs.tensor.name)
    done: set[tuple[str, tuple]] = set()
    while True:
        C = get_at(W, cpath)
        site = next(n for _, n in walk(C)
                    if isinstance(n, (Assign, Increment)) and n.lhs.tensor.name == lhs.tensor.name)
        pending = [a for a in accesses(site.rhs)
                   if not a.tensor.on_chip and (a.tensor.name, a.indices) not in done]
        if not pending:
            break
        acc = pending[0]
        done.add((acc.tensor.name, acc.indices))
        c_loops, _ = _peel(C)
        tvars = [v for v in acc.indices if v in c_loops]
        modes = [acc.indices.index(v) for v in tvars]
        t_on = TensorVar(_fresh_tensor(taken, acc.tensor.name + "_on"),
                         slice_format(acc.tensor.format, modes))
        outside = [f.var for _, f in enclosing_foralls(body, path)]
        outside += [f.var for _, f in enclosing_foralls(W, cpath)]
        C2 = precompute(C, acc, tvars, tvars, t_on, outside)
        taken = Where(taken, C2)
        W = replace_at(W, cpath, C2)
        if isinstance(C2, Where):
            cpath = cpath + (0,)
    call = _mapped(W, cpath, rels, backend, f, c)
    scope = _scope(body, path, rels)
    call = dataclasses.replace(call, scope=Scope(scope.index_vars + call.scope.index_vars,
                                                 call.scope.relations))
    return with_root(replace_at(body, path, replace_at(W, cpath, call)), rels)


# -- environment -------------------------------------------------------------------

KNOWN_ENV = ("innerPar", "outerPar", "nnz_accel_max", "bitvector_word", "fifo_depth")


def environment(s: Stmt, var: str, c: int) -> Stmt:
    """Bind a hardware configuration variable at the statement root."""
    if not var.isidentifier():
        raise ScheduleError(f"{var!r} is not a valid configuration name")
    if isinstance(c, bool) or not isinstance(c, int) or c <= 0:
        raise ScheduleError(f"{var} must be bound to a positive integer, got {c!r}")
    body, rels = split_root(s)
    if any(isinstance(r, EnvBinding) and r.var == var for r in rels):
        warnings.warn(f"environment variable {var} rebound to {c}", stacklevel=2)
        rels = tuple(EnvBinding(var, c) if isinstance(r, EnvBinding) and r.var == var else r
                     for r in rels)
        return SuchThat(body, rels)
    return SuchThat(body, rels + (EnvBinding(var, c),))


# -- inlining (inverse of precompute) -------------------------------------------------

def inline_where(s: Stmt) -> Stmt:
    """Inline every ``where`` whose producer is a loop nest around one assignment."""
    body, rels = split_root(s)
    while True:
        site = next((p for p, n in walk(body) if isinstance(n, Where)
                     and isinstance(_peel(n.producer)[1], (Assign, Increment))), None)
        if site is None:
            return with_root(body, rels)
        body = replace_at(body, site, _inline_one(get_at(body, site)))


def _inline_one(w: Where) -> Stmt:
    p_loops, prod = _peel(w.producer)
    T = prod.lhs.tensor
    moved = [v for v in p_loops if v not in prod.lhs.indices]

    def substitute(node: Stmt):
        if isinstance(node, Where):
            return None
        if not isinstance(node, (Assign, Increment)):
            return None
        uses = [a for a in accesses(node.rhs) if a.tensor.name == T.name]
        if not uses:
            return None
        rhs = node.rhs
        for use in uses:
            mapping = dict(zip(prod.lhs.indices, use.indices))
            rhs, _ = replace_subexpr(rhs, use, rename_vars(prod.rhs, mapping))
        op = Increment if (moved or isinstance(node, Increment)) else Assign
        return _wrap(moved, op(node.lhs, rhs))

    from .stmt import map_stmt_tree
    return map_stmt_tree(w.consumer, substitute)
