"""Iteration structure of a scheduled statement.

This pass walks a concrete index notation statement in execution order
and works out, for every ``forall``:

* the iterator contraction over the tensor levels its variable indexes
  (derived from the loop body with temporaries and copies inlined back to
  the stored tensors they come from);
* the lowered loop header (:func:`~.contraction.lower_iter`);
* which loop binds each level of each stored-tensor access, and in what
  role (dense index, position loop, scanned, ranked).

On-chip copies produced by ``where`` (``X_on(v) = X(...)``) are treated as
aliases of their source: they add a staging site, not new storage.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator

from ..cin.stmt import (Assign, Forall, Fuse, Increment, MappedCall, Sequence, SplitDown, SplitUp,
                        Stmt, SuchThat, Where, assignments, env_bindings, schedule_relations,
                        split_root)
from ..cin.transforms import inline_where
from ..expr import (Access, Expr, IndexVar, Literal, Mul, TensorVar, accesses,
                    format_access, map_expr)
from ..tensor import COMPRESSED, UNCOMPRESSED
from .contraction import (Contraction, DenseLoop, IterFormat, Leaf, LoweredIter, Node, Op, Role,
                          lower_iter)
from .ir import BinOp, Const, Sym, ValueExpr, add, mul, sub

Site = tuple[int, ...]  # path of a forall's body in the statement; () is the top level
TOP: Site = ()

DEFAULT_ENV = {"innerPar": 16, "outerPar": 1, "nnz_accel_max": 1 << 20,
               "bitvector_word": 32, "fifo_depth": 16}


class LoweringError(ValueError):
    pass


@dataclasses.dataclass(eq=False)
class Copy:
    """``name(vars) = source`` produced on-chip at ``site``."""

    name: str
    vars: tuple[IndexVar, ...]
    source: Access
    site: Site


@dataclasses.dataclass(eq=False)
class SourceAccess:
    """One access pattern of a stored (non-copy) tensor."""

    key: str
    tensor: TensorVar
    indices: tuple[IndexVar, ...]
    leaf: str
    level_loop: list["LoopInfo | None"] = dataclasses.field(default_factory=list)
    level_role: list[Role | None] = dataclasses.field(default_factory=list)
    reads: list[Site] = dataclasses.field(default_factory=list)
    copy: Copy | None = None

    @property
    def name(self) -> str:
        return self.tensor.name

    @property
    def levels(self) -> tuple:
        return self.tensor.format.levels

    def level_var(self, level: int) -> IndexVar:
        return self.indices[self.tensor.format.mode_order[level]]

    def level_of_var(self, v: IndexVar) -> int | None:
        hits = [lv for lv in range(len(self.levels)) if self.level_var(lv) == v]
        if len(hits) > 1:
            raise LoweringError(f"{self.key} uses {v} for more than one mode")
        return hits[0] if hits else None


@dataclasses.dataclass(eq=False)
class OutputLevel:
    """How a compressed output level is assembled at its loop."""

    mode: str               # "alias" (positions shared with an input) or "count"
    source: "SourceAccess | None" = None
    source_level: int | None = None


@dataclasses.dataclass(eq=False)
class Output:
    """A written stored tensor (kernel output or on-chip temporary)."""

    access: SourceAccess
    sites: list[tuple[Site, bool]] = dataclasses.field(default_factory=list)  # (site, increment)
    level_loop: list["LoopInfo | None"] = dataclasses.field(default_factory=list)
    level_mode: list[OutputLevel | None] = dataclasses.field(default_factory=list)
    temp_site: Site | None = None  # where-site of an on-chip temporary

    @property
    def tensor(self) -> TensorVar:
        return self.access.tensor


@dataclasses.dataclass(eq=False)
class LoopInfo:
    id: Site
    var: IndexVar
    parent: "LoopInfo | None"
    label: str
    contraction: Contraction | None
    header: LoweredIter
    leaves: dict[str, tuple[SourceAccess, int]]
    binds: tuple[IndexVar, ...]     # variables whose value is known from here on
    extent: ValueExpr
    derived: tuple[tuple[IndexVar, ValueExpr], ...] = ()  # split/fuse reconstruction
    guard: ValueExpr | None = None
    reduction: MappedCall | None = None
    innermost: bool = False

    @property
    def parent_site(self) -> Site:
        return self.parent.id if self.parent else TOP

    def ancestors(self) -> Iterator["LoopInfo"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    @property
    def dense(self) -> bool:
        return isinstance(self.header.loop, DenseLoop)


def is_ancestor(a: Site, b: Site) -> bool:
    """``a`` encloses (or equals) ``b``."""
    return b[:len(a)] == a


@dataclasses.dataclass
class Analysis:
    stmt: Stmt
    body: Stmt
    env: dict[str, int]
    loops: dict[Site, LoopInfo]
    accesses: dict[str, SourceAccess]
    outputs: dict[str, Output]
    copies: dict[str, Copy]
    temps: dict[str, Site]          # on-chip temporary -> where-site
    dims: dict[IndexVar, str]       # canonical size symbol of each variable
    inputs: list[TensorVar]
    scalar_copies: dict[str, SourceAccess]
    diagnostics: list[str]
    temp_vars: dict[str, TensorVar] = dataclasses.field(default_factory=dict)

    def loop(self, site: Site) -> LoopInfo | None:
        return self.loops.get(site)

    def site_label(self, site: Site) -> str:
        return self.loops[site].label if site in self.loops else "top"

    def tensor_accesses(self, name: str) -> list[SourceAccess]:
        return [a for a in self.accesses.values() if a.name == name]

    def stored_tensors(self) -> list[TensorVar]:
        seen: dict[str, TensorVar] = {}
        for t in self.inputs:
            seen.setdefault(t.name, t)
        for out in self.outputs.values():
            seen.setdefault(out.tensor.name, out.tensor)
        for t in self.temp_vars.values():
            seen.setdefault(t.name, t)
        return list(seen.values())

    def dim(self, v: IndexVar) -> ValueExpr:
        return Sym(self.dims[v])


# -- helpers ------------------------------------------------------------------------

def _peel(s: Stmt) -> tuple[list[IndexVar], Stmt]:
    loops = []
    while isinstance(s, Forall):
        loops.append(s.var)
        s = s.body
    return loops, s


def copy_of(producer: Stmt) -> tuple[list[IndexVar], Access, Access] | None:
    """``(vars, lhs, source)`` if ``producer`` is a plain on-chip copy."""
    loops, inner = _peel(producer)
    if not isinstance(inner, Assign) or not isinstance(inner.rhs, Access):
        return None
    if not inner.lhs.tensor.on_chip or list(inner.lhs.indices) != loops:
        return None
    return loops, inner.lhs, inner.rhs


def expand_mapped(s: Stmt) -> Stmt:
    if isinstance(s, MappedCall):
        return expand_mapped(s.original)
    kids = s.children()
    if not kids:
        return s
    return s.with_children(tuple(expand_mapped(k) for k in kids))


def ceil_div(a: ValueExpr, c: int) -> ValueExpr:
    return BinOp("/", add(a, c - 1), Const(c))


# -- the pass -----------------------------------------------------------------------

class _Analyzer:
    def __init__(self, s: Stmt):
        self.stmt = s
        self.body, _ = split_root(s)
        self.env = dict(DEFAULT_ENV)
        self.env.update(env_bindings(s))
        self.rels = schedule_relations(s)
        self.loops: dict[Site, LoopInfo] = {}
        self.accesses: dict[str, SourceAccess] = {}
        self.outputs: dict[str, Output] = {}
        self.copies: dict[str, Copy] = {}
        self.scalar_copies: dict[str, SourceAccess] = {}
        self.temps: dict[str, Site] = {}
        self.temp_vars: dict[str, TensorVar] = {}
        self.labels: dict[str, int] = {}
        self.diagnostics: list[str] = []
        written = {a.lhs.tensor.name for a in assignments(self.body)}
        self.copy_names = set()
        for _, node in _walk_all(self.body):
            if isinstance(node, Where):
                c = copy_of(node.producer)
                if c is not None:
                    self.copy_names.add(c[1].tensor.name)
                for a in assignments(node.producer):
                    written.add(a.lhs.tensor.name)
        self.written = written
        self.inputs: list[TensorVar] = []
        for a in self._flat() + assignments(self.body):
            for acc in accesses(a.rhs):
                t = acc.tensor
                if t.name not in written and t.name not in {x.name for x in self.inputs}:
                    self.inputs.append(t)
        self.dims = self._dims()

    # canonical size symbols ------------------------------------------------------

    def _flat(self) -> list[Assign | Increment]:
        s = inline_where(expand_mapped(self.body))
        return assignments(s)

    def _dims(self) -> dict[IndexVar, str]:
        dims: dict[IndexVar, str] = {}
        input_names = {t.name for t in self.inputs}
        flat = self._flat()
        for a in flat:
            for acc in [a.lhs] + accesses(a.rhs):
                if acc.tensor.name in input_names:
                    for m, v in enumerate(acc.indices):
                        dims[v] = f"{acc.tensor.name}{m + 1}_dim"
        for a in flat:
            for acc in [a.lhs] + accesses(a.rhs):
                for m, v in enumerate(acc.indices):
                    dims.setdefault(v, f"{acc.tensor.name}{m + 1}_dim")
        return dims

    # access resolution ---------------------------------------------------------------

    def resolve(self, acc: Access, copies: dict[str, Copy]) -> Access:
        while acc.tensor.name in copies:
            c = copies[acc.tensor.name]
            mapping = dict(zip(c.vars, acc.indices))
            acc = Access(c.source.tensor, tuple(mapping.get(v, v) for v in c.source.indices))
        return acc

    def source(self, acc: Access) -> SourceAccess:
        key = format_access(acc)
        sa = self.accesses.get(key)
        if sa is None:
            same = [a for a in self.accesses.values() if a.name == acc.tensor.name]
            if same and acc.tensor.order > 0:
                raise LoweringError(
                    f"{acc.tensor.name} is traversed as both {same[0].key} and {key}; "
                    f"reuse under different index patterns is not supported")
            n = acc.tensor.order
            sa = SourceAccess(key, acc.tensor, tuple(acc.indices), acc.tensor.name,
                              [None] * n, [None] * n)
            self.accesses[key] = sa
        return sa

    def output(self, acc: Access) -> Output:
        name = acc.tensor.name
        out = self.outputs.get(name)
        if out is None:
            sa = self.source(acc)
            n = acc.tensor.order
            out = Output(sa, [], [None] * n, [None] * n)
            self.outputs[name] = out
        return out

    # contraction -----------------------------------------------------------------------

    def effective(self, body: Stmt, copies: dict[str, Copy]) -> list[tuple[Access, Expr]]:
        flat = assignments(inline_where(expand_mapped(body)))
        out = []
        for a in flat:
            rhs = map_expr(a.rhs, lambda e: self.resolve(e, copies) if isinstance(e, Access)
                           else None)
            out.append((self.resolve(a.lhs, copies), rhs))
        return out

    def contraction(self, v: IndexVar, exprs: list[Expr], bound: set[tuple[str, int]],
                    leaves: dict[str, tuple[SourceAccess, int]]) -> Contraction | None:
        def tree(e: Expr) -> Contraction | None | str:
            if isinstance(e, Access):
                if e.tensor.name in self.temps and e.tensor.order == 0:
                    return None
                sa = self.source(e)
                lv = sa.level_of_var(v)
                if lv is None:
                    return None
                kind = sa.levels[lv]
                if kind is COMPRESSED and any((sa.key, m) not in bound for m in range(lv)):
                    raise LoweringError(
                        f"loop over {v} reaches compressed level {lv + 1} of {sa.key} before "
                        f"its outer levels; reorder the loops to follow the storage order")
                leaves[sa.leaf] = (sa, lv)
                return Leaf(sa.leaf, IterFormat.UNIVERSE if kind is UNCOMPRESSED
                            else IterFormat.COMPRESSED)
            if isinstance(e, Literal):
                return None
            a, b = tree(e.a), tree(e.b)
            if isinstance(e, Mul):
                if a is None or b is None:
                    return a if b is None else b
                return Node(Op.INTERSECT, a, b)
            if a is None and b is None:
                return None
            if a is None or b is None:
                return Node(Op.UNION, a if a is not None else Leaf("1", IterFormat.UNIVERSE),
                            b if b is not None else Leaf("1", IterFormat.UNIVERSE))
            return Node(Op.UNION, a, b)

        parts = [t for t in (tree(e) for e in exprs) if t is not None]
        if not parts:
            return None
        c = parts[0]
        for p in parts[1:]:
            c = Node(Op.UNION, c, p)
        return c

    # walk ------------------------------------------------------------------------------

    def run(self) -> Analysis:
        ctx = _Ctx(None, {}, set(), set(), None, TOP)
        self.visit(self.body, (), ctx)
        for out in self.outputs.values():
            self._output_modes(out)
        return Analysis(self.stmt, self.body, self.env, self.loops, self.accesses, self.outputs,
                        self.copies, self.temps, self.dims, self.inputs, self.scalar_copies,
                        self.diagnostics, self.temp_vars)

    def _label(self, ctx: "_Ctx", v: IndexVar) -> str:
        base = f"{ctx.loop.label}/{v}" if ctx.loop else str(v)
        n = self.labels.get(base, 0) + 1
        self.labels[base] = n
        return base if n == 1 else f"{base}#{n}"

    def _derive(self, bound_vars: set[IndexVar]) -> list[tuple[IndexVar, ValueExpr, bool]]:
        """Variables reconstructible from ``bound_vars`` via split/fuse relations."""
        out = []
        changed = True
        known = set(bound_vars)
        while changed:
            changed = False
            for r in self.rels:
                if isinstance(r, Fuse) and r.f in known and r.io not in known:
                    inner = self.var_extent(r.ii)
                    out.append((r.io, BinOp("/", _v(r.f), inner), False))
                    out.append((r.ii, BinOp("%", _v(r.f), inner), False))
                    known |= {r.io, r.ii}
                    changed = True
                elif isinstance(r, (SplitUp, SplitDown)) and r.io in known and r.ii in known \
                        and r.i not in known:
                    step = (Const(r.c) if isinstance(r, SplitUp)
                            else ceil_div(self.var_extent(r.i), r.c))
                    out.append((r.i, add(mul(_v(r.io), step), _v(r.ii)), True))
                    known.add(r.i)
                    changed = True
        return out

    def var_extent(self, v: IndexVar) -> ValueExpr:
        for r in self.rels:
            if isinstance(r, SplitUp):
                if v == r.ii:
                    return Const(r.c)
                if v == r.io:
                    return ceil_div(self.var_extent(r.i), r.c)
            if isinstance(r, SplitDown):
                if v == r.io:
                    return Const(r.c)
                if v == r.ii:
                    return ceil_div(self.var_extent(r.i), r.c)
            if isinstance(r, Fuse) and v == r.f:
                return mul(self.var_extent(r.io), self.var_extent(r.ii))
        if v not in self.dims:
            raise LoweringError(f"no extent known for {v}")
        return Sym(self.dims[v])

    def visit(self, s: Stmt, path: Site, ctx: "_Ctx") -> None:
        if isinstance(s, Forall):
            self.visit_forall(s, path, ctx)
        elif isinstance(s, SuchThat):
            self.visit(s.body, path + (0,), ctx)
        elif isinstance(s, Sequence):
            self.visit(s.first, path + (0,), ctx)
            self.visit(s.second, path + (1,), ctx)
        elif isinstance(s, Where):
            self.visit_where(s, path, ctx)
        elif isinstance(s, MappedCall):
            if (s.backend, s.func) != ("Spatial", "Reduction"):
                raise LoweringError(f"no lowering for backend function {s.backend}.{s.func}")
            self.visit(s.original, path + (0,), dataclasses.replace(ctx, reduction=s))
        elif isinstance(s, (Assign, Increment)):
            self.visit_assign(s, ctx)
        else:
            raise LoweringError(f"cannot lower {type(s).__name__}")

    def visit_where(self, s: Where, path: Site, ctx: "_Ctx") -> None:
        c = copy_of(s.producer)
        if c is not None:
            loops, lhs, src = c
            if lhs.tensor.name in self.copies:
                raise LoweringError(f"{lhs.tensor.name} is copied more than once")
            src = self.resolve(src, ctx.copies)
            copy = Copy(lhs.tensor.name, tuple(loops), src, ctx.site)
            self.copies[copy.name] = copy
            copies = dict(ctx.copies)
            copies[copy.name] = copy
            sa = self.source(src)
            if loops:
                if sa.copy is not None:
                    raise LoweringError(f"{sa.key} is staged on-chip more than once")
                sa.copy = copy
            else:
                sa.reads.append(ctx.site)
                self.scalar_copies[copy.name] = sa
                self._check_bound(sa, ctx)
            self.visit(s.consumer, path + (0,), dataclasses.replace(ctx, copies=copies))
            return
        for a in assignments(s.producer):
            name = a.lhs.tensor.name
            if name in self.copy_names:
                continue
            if not a.lhs.tensor.on_chip:
                raise LoweringError(f"where-producer writes off-chip tensor {name}")
            self.temps.setdefault(name, ctx.site)
            self.temp_vars.setdefault(name, a.lhs.tensor)
        self.visit(s.producer, path + (1,), ctx)
        self.visit(s.consumer, path + (0,), ctx)

    def visit_forall(self, s: Forall, path: Site, ctx: "_Ctx") -> None:
        v = s.var
        new_bound = ctx.vars | {v}
        derived = self._derive(new_bound)
        binds = [v] + [d for d, _, _ in derived if d not in ctx.vars]
        guard = None
        noted = []
        for d, expr, from_split in derived:
            if d in ctx.vars:
                continue
            noted.append((d, expr))
            if from_split and self._fused_inner(d):
                guard = BinOp("<", _v(d), self.var_extent(d))
        exprs = self.effective(s.body, ctx.copies)
        leaves: dict[str, tuple[SourceAccess, int]] = {}
        contraction = None
        for var in binds:
            c = self.contraction(var, [e for _, e in exprs], ctx.levels, leaves)
            if var != v and c is not None:
                kinds = {sa.levels[lv] for sa, lv in leaves.values()}
                if COMPRESSED in kinds:
                    raise LoweringError(f"split/fuse of {var} is only supported over dense "
                                        f"levels")
                continue
            if var == v:
                contraction = c
        if contraction is None:
            header = LoweredIter((), DenseLoop(), {}, {}, ("single: U → dense foreach",), 1)
        else:
            header = lower_iter(contraction)
        extent = self.var_extent(v)
        if any(isinstance(r, SplitUp) and r.ii == v for r in self.rels):
            r = next(r for r in self.rels if isinstance(r, SplitUp) and r.ii == v)
            if r.io in ctx.vars:
                extent = BinOp("min", Const(r.c), sub(self.var_extent(r.i),
                                                        mul(_v(r.io), Const(r.c))))
        if any(isinstance(r, SplitDown) and r.ii == v for r in self.rels):
            r = next(r for r in self.rels if isinstance(r, SplitDown) and r.ii == v)
            if r.io in ctx.vars:
                step = ceil_div(self.var_extent(r.i), r.c)
                extent = BinOp("max", Const(0), BinOp("min", step, sub(
                    self.var_extent(r.i), mul(_v(r.io), step))))
        info = LoopInfo(path + (0,), v, ctx.loop, self._label(ctx, v), contraction, header, leaves,
                        tuple(binds), extent, tuple(noted), guard, ctx.reduction)
        info.innermost = not any(isinstance(n, Forall) for _, n in _walk_all(s.body))
        self.loops[info.id] = info
        levels = set(ctx.levels)
        for name, (sa, lv) in leaves.items():
            role = header.roles.get(name, Role.DENSE)
            if sa.level_loop[lv] is not None and sa.level_loop[lv] is not info:
                raise LoweringError(f"level {lv + 1} of {sa.key} is traversed by two loops")
            sa.level_loop[lv] = info
            sa.level_role[lv] = role
            levels.add((sa.key, lv))
        inner = _Ctx(info, ctx.copies, new_bound | {d for d, _ in noted}, levels,
                     ctx.reduction, info.id)
        self._bind_outputs(info, exprs, ctx)
        self.visit(s.body, path + (0,), inner)

    def _fused_inner(self, d: IndexVar) -> bool:
        fused = {r.io for r in self.rels if isinstance(r, Fuse)} | \
                {r.ii for r in self.rels if isinstance(r, Fuse)}
        for r in self.rels:
            if isinstance(r, (SplitUp, SplitDown)) and r.i == d and (r.io in fused or
                                                                    r.ii in fused):
                return True
        return False

    def _bind_outputs(self, info: LoopInfo, exprs, ctx: "_Ctx") -> None:
        for lhs, _ in exprs:
            name = lhs.tensor.name
            if lhs.tensor.order == 0 or name in self.copy_names:
                continue
            if name in self.temps and self.temps[name] != TOP and \
                    not is_ancestor(self.temps[name], info.id):
                continue
            for var in info.binds:
                out = self.output(lhs)
                lv = out.access.level_of_var(var)
                if lv is not None and out.level_loop[lv] is None:
                    out.level_loop[lv] = info

    def _check_bound(self, sa: SourceAccess, ctx: "_Ctx") -> None:
        for lv in range(len(sa.levels)):
            if (sa.key, lv) not in ctx.levels:
                raise LoweringError(f"{sa.key} is read before level {lv + 1} is bound by a "
                                    f"loop")

    def visit_assign(self, s: Assign | Increment, ctx: "_Ctx") -> None:
        for acc in accesses(s.rhs):
            if acc.tensor.name in ctx.copies and not ctx.copies[acc.tensor.name].vars:
                continue
            if acc.tensor.name in self.temps and acc.tensor.order == 0:
                continue
            src = self.resolve(acc, ctx.copies)
            sa = self.source(src)
            self._check_bound(sa, ctx)
            sa.reads.append(ctx.site)
        lhs = s.lhs
        if lhs.tensor.order == 0:
            if lhs.tensor.name not in self.temps:
                self.output(lhs).sites.append((ctx.site, isinstance(s, Increment)))
            return
        out = self.output(self.resolve(lhs, ctx.copies))
        out.sites.append((ctx.site, isinstance(s, Increment)))
        missing = [lv for lv, lp in enumerate(out.level_loop) if lp is None]
        if missing:
            raise LoweringError(f"{format_access(lhs)} is written outside a loop over its "
                                f"mode(s) {', '.join(str(out.access.level_var(m)) for m in missing)}")

    def _output_modes(self, out: Output) -> None:
        sa = out.access
        if out.tensor.name in self.temps:
            out.temp_site = self.temps[out.tensor.name]
        for lv, kind in enumerate(sa.levels):
            if kind is not COMPRESSED:
                continue
            loop = out.level_loop[lv]
            if any(inc for _, inc in out.sites):
                raise LoweringError(f"accumulating into compressed level {lv + 1} of "
                                    f"{out.tensor.name} is not supported; reduce into a "
                                    f"workspace first")
            prefix_dense = all(sa.levels[m] is UNCOMPRESSED and out.level_loop[m].dense
                               for m in range(lv))
            if not prefix_dense and any(not out.level_loop[m].dense and
                                        sa.levels[m] is UNCOMPRESSED for m in range(lv)):
                raise LoweringError(f"output {sa.key}: level {lv + 1} sits below a level that "
                                    f"is not visited densely")
            mode = OutputLevel("count")
            h = loop.header.loop
            if hasattr(h, "leaf"):
                src, slv = loop.leaves[h.leaf]
                same = slv == lv
                for m in range(lv):
                    if sa.levels[m] is UNCOMPRESSED:
                        same = same and src.levels[m] is UNCOMPRESSED and \
                            src.level_var(m) == sa.level_var(m) and out.level_loop[m].dense
                    else:
                        pm = out.level_mode[m]
                        same = same and pm is not None and pm.mode == "alias" and \
                            pm.source is src and pm.source_level == m
                if same:
                    mode = OutputLevel("alias", src, slv)
            out.level_mode[lv] = mode


@dataclasses.dataclass(frozen=True)
class _Ctx:
    loop: LoopInfo | None
    copies: dict
    vars: set
    levels: set
    reduction: MappedCall | None
    site: Site


def _v(var: IndexVar):
    from .ir import Var
    return Var(var.name)


def _walk_all(s: Stmt, path: Site = ()) -> Iterator[tuple[Site, Stmt]]:
    """Pre-order walk that also enters mapped originals (child index 0)."""
    yield path, s
    if isinstance(s, MappedCall):
        yield from _walk_all(s.original, path + (0,))
        return
    for k, child in enumerate(s.children()):
        yield from _walk_all(child, path + (k,))


def analyze(s: Stmt) -> Analysis:
    return _Analyzer(s).run()


def derive_contraction(s: Stmt, var: IndexVar | str) -> Contraction | None:
    """Iterator contraction of the loop over ``var`` in ``s``."""
    var = IndexVar(var) if isinstance(var, str) else var
    a = analyze(s)
    for info in a.loops.values():
        if info.var == var:
            return info.contraction
    raise LoweringError(f"no loop over {var}")


__all__ = ["Analysis", "Copy", "DEFAULT_ENV", "LoopInfo", "LoweringError", "Output",
           "OutputLevel", "Site", "SourceAccess", "TOP", "analyze", "derive_contraction",
           "is_ancestor"]
