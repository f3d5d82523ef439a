"""Lower scheduled index notation plus a memory plan to a pattern program."""

from __future__ import annotations

import dataclasses

from ..cin.stmt import (Assign, Forall, Increment, MappedCall, Sequence, Stmt, SuchThat, Where)
from ..expr import Access, Add, Expr, Literal, Mul, Sub, format_access
from ..memory import ArrayId, MemoryPlan, PlanEntry, place_allocations_and_transfers
from ..tensor import COMPRESSED, UNCOMPRESSED
from .analysis import (TOP, Analysis, LoopInfo, LoweringError, Output, Site, SourceAccess,
                       analyze, copy_of)
from .contraction import (CombineBitVectors, DenseLoop, DualScan, GenBitVector, PositionLoop,
                          Role)
from . import ir
from .ir import (ONE, ZERO, Alloc, BinOp, BitRank, Const, Counter, Dequeue, Enqueue, Foreach,
                 If, Let, Load, MemDecl, MemoryKind, Read, Reduce, Scan, Select, Store,
                 StreamStore, Sym, TensorIO, ValueExpr, Var, Write, add, mul, sub)

Key = tuple[str, int]


@dataclasses.dataclass
class _Ctx:
    site: Site
    loop: LoopInfo | None
    pos: dict                 # (access key, level) -> (position, may be absent)
    outpos: dict              # (output name, level) -> position
    seg: dict                 # (access key, level) -> (start, end, len)
    base: dict                # on-chip array -> global index of its element 0
    scalars: dict             # tensor name -> value expression
    bound: set                # index variable names with a value
    hoisted: dict             # FIFO array -> let name holding this iteration's element
    fresh: set = dataclasses.field(default_factory=set)  # registers still holding zero
    temps: set = dataclasses.field(default_factory=set)  # temporaries allocated at this site

    def child(self, loop: LoopInfo | None = None, site: Site | None = None) -> "_Ctx":
        return _Ctx(self.site if site is None else site, loop or self.loop, dict(self.pos),
                    dict(self.outpos), dict(self.seg), dict(self.base), dict(self.scalars),
                    set(self.bound), {})


def _static(e: ValueExpr) -> bool:
    if isinstance(e, (Const, Sym)):
        return True
    if isinstance(e, BinOp):
        return _static(e.a) and _static(e.b)
    return False


def _ge0(e: ValueExpr) -> ValueExpr:
    return BinOp(">=", e, ZERO)


class Lowerer:
    def __init__(self, s: Stmt, plan: MemoryPlan | None = None, name: str = "kernel"):
        self.an: Analysis = plan.analysis if plan is not None else analyze(s)
        self.plan = plan if plan is not None else place_allocations_and_transfers(self.an)
        self.name = name
        self.env = self.an.env
        self.depth = self.env["fifo_depth"]
        self.drams: list[MemDecl] = []
        self.counter = 0

    # -- naming / lookup -------------------------------------------------------------

    def entry(self, a: ArrayId) -> PlanEntry:
        return self.plan.entries[a.name]

    def tensor(self, name: str):
        for t in self.an.stored_tensors():
            if t.name == name:
                return t
        raise KeyError(name)

    def dim_sym(self, tensor: str, mode: int) -> Sym:
        return Sym(f"{tensor}{mode + 1}_dim")

    def level_dim(self, t, level: int) -> Sym:
        return self.dim_sym(t.name, t.format.mode_order[level])

    def fresh(self, base: str) -> str:
        self.counter += 1
        return f"{base}{self.counter}"

    def local(self, ctx: _Ctx, mem: str, g: ValueExpr) -> ValueExpr:
        return sub(g, ctx.base.get(mem, ZERO))

    # -- positions ----------------------------------------------------------------------

    def position(self, ctx: _Ctx, sa: SourceAccess, lv: int) -> tuple[ValueExpr, bool]:
        """Global position of ``sa`` at storage level ``lv`` (-1 when absent)."""
        if lv < 0:
            return ZERO, False
        hit = ctx.pos.get((sa.key, lv))
        if hit is not None:
            return hit
        if sa.levels[lv] is not UNCOMPRESSED:
            raise LoweringError(f"level {lv + 1} of {sa.key} is not bound here")
        var = sa.level_var(lv).name
        if var not in ctx.bound:
            raise LoweringError(f"{sa.key} is used where {var} has no value")
        parent, absent = self.position(ctx, sa, lv - 1)
        p = add(mul(parent, self.level_dim(sa.tensor, lv)), Var(var))
        if absent:
            p = Select(_ge0(parent), p, Const(-1))
        return p, absent

    def known(self, ctx: _Ctx, sa: SourceAccess, lv: int, outputs: bool = False) -> bool:
        table = ctx.outpos if outputs else ctx.pos
        key = (sa.name, lv) if outputs else (sa.key, lv)
        if key in table:
            return True
        if sa.levels[lv] is UNCOMPRESSED and sa.level_var(lv).name in ctx.bound:
            return lv == 0 or self.known(ctx, sa, lv - 1, outputs)
        return False

    def out_position(self, ctx: _Ctx, out: Output, lv: int) -> ValueExpr:
        if lv < 0:
            return ZERO
        hit = ctx.outpos.get((out.tensor.name, lv))
        if hit is not None:
            return hit
        sa = out.access
        if sa.levels[lv] is not UNCOMPRESSED:
            raise LoweringError(f"level {lv + 1} of output {sa.key} is not bound here")
        var = sa.level_var(lv).name
        if var not in ctx.bound:
            raise LoweringError(f"output {sa.key} is written where {var} has no value")
        parent = self.out_position(ctx, out, lv - 1)
        return add(mul(parent, self.level_dim(sa.tensor, lv)), Var(var))

    # -- memories -----------------------------------------------------------------------

    def decl(self, e: PlanEntry, size: ValueExpr) -> MemDecl:
        if e.kind is MemoryKind.REGISTER:
            return MemDecl(e.array.name, e.kind, ONE, zero=True)
        if e.kind.is_queue:
            return MemDecl(e.array.name, e.kind, Sym("nnz_accel_max"), self.depth)
        if not _static(size):
            size = Sym("nnz_accel_max")
        return MemDecl(e.array.name, e.kind, size, zero=e.zero)

    def _load(self, ctx: _Ctx, out: list, e: PlanEntry, lo: ValueExpr, hi: ValueExpr,
              size: ValueExpr | None = None, transfer: bool = True) -> None:
        name = e.array.name
        out.append(Alloc(self.decl(e, size if size is not None else sub(hi, lo))))
        if transfer and e.transfer == "load":
            out.append(Load(name, f"{name}_dram", lo, hi, "innerPar"))
        if not e.kind.is_queue:
            ctx.base[name] = lo

    def stage(self, ctx: _Ctx, sa: SourceAccess, wanted: set[str], out: list) -> None:
        """Allocate (and load) the arrays of ``sa`` named in ``wanted`` at this site."""
        t = sa.tensor
        lo, hi = ZERO, ONE
        n: ValueExpr | None = ONE  # static range length, None once data-dependent
        spanning = False
        order = [a.name for a in _arrays_of(t)]
        last = max(order.index(w) for w in wanted)
        for lv, kind in enumerate(t.format.levels):
            if not spanning and self.known(ctx, sa, lv):
                p, _ = self.position(ctx, sa, lv)
                lo, hi = p, add(p, 1)
                continue
            spanning = True
            if kind is UNCOMPRESSED:
                d = self.level_dim(t, lv)
                lo, hi = mul(lo, d), mul(hi, d)
                n = mul(n, d) if n is not None else None
                continue
            pa, ca = ArrayId(t.name, "pos", lv), ArrayId(t.name, "crd", lv)
            if pa.name in wanted:
                self._load(ctx, out, self.entry(pa), lo, add(hi, 1),
                           size=add(n, 1) if n is not None else None)
            if order.index(pa.name) >= last:
                return
            single = hi == add(lo, 1)
            s_val = Read(pa.name, self.local(ctx, pa.name, lo))
            e_val = Read(pa.name, self.local(ctx, pa.name, hi))
            L = sa.level_loop[lv]
            if single and L is not None:
                names = self.seg_names(L, sa)
                if (sa.key, lv) not in ctx.seg:
                    out += [Let(names[0], s_val), Let(names[1], e_val),
                            Let(names[2], sub(Var(names[1]), Var(names[0])))]
                    ctx.seg[(sa.key, lv)] = tuple(Var(x) for x in names)
                lo, hi = Var(names[0]), Var(names[1])
            else:
                a, b = self.fresh(f"{pa.name}_lo"), self.fresh(f"{pa.name}_hi")
                out += [Let(a, s_val), Let(b, e_val)]
                lo, hi = Var(a), Var(b)
            n = None
            if ca.name in wanted:
                self._load(ctx, out, self.entry(ca), lo, hi)
        va = self.vals_id(t)
        if va.name in wanted:
            self._load(ctx, out, self.entry(va), lo, hi, size=n)

    def vals_id(self, t) -> ArrayId:
        return ArrayId(t.name, "vals", scalar=t.order == 0)

    def seg_names(self, L: LoopInfo, sa: SourceAccess) -> tuple[str, str, str]:
        p = f"{L.var}{sa.leaf}"
        return f"{p}_start", f"{p}_end", f"{p}_len"

    def reader(self, name: str) -> SourceAccess | None:
        for a in self.an.tensor_accesses(name):
            if name not in self.an.outputs or a.key != self.an.outputs[name].access.key or \
                    a.reads:
                return a
        accs = self.an.tensor_accesses(name)
        return accs[0] if accs else None

    def site_allocations(self, ctx: _Ctx) -> tuple[list, list]:
        """Allocations and transfers the plan places at ``ctx.site`` (head, tail)."""
        head: list = []
        tail: list = []
        entries = self.plan.at_site(ctx.site, ("access", "output", "resident"))
        by_tensor: dict[str, set[str]] = {}
        for e in entries:
            by_tensor.setdefault(e.array.tensor, set()).add(e.array.name)
        for t in self.an.stored_tensors():
            names = by_tensor.get(t.name)
            if not names:
                continue
            if t.name in self.an.outputs and t.name not in self.an.temps:
                self.output_allocations(ctx, self.an.outputs[t.name], names, head, tail)
            elif t.order == 0:
                e = self.entry(self.vals_id(t))
                head.append(Alloc(self.decl(e, ONE)))
                if e.transfer == "load":
                    head.append(Load(e.array.name, f"{e.array.name}_dram", ZERO, ONE))
            else:
                self.stage(ctx, self.reader(t.name), names, head)
        return head, tail

    def output_allocations(self, ctx: _Ctx, out: Output, names: set[str], head: list,
                           tail: list) -> None:
        t = out.tensor
        if t.order == 0:
            e = self.entry(self.vals_id(t))
            head.append(Alloc(self.decl(e, ONE)))
            if e.transfer:
                tail.append(Store(f"{t.name}_dram", t.name, ZERO, ONE, "innerPar"))
            return
        for lv, kind in enumerate(t.format.levels):
            if kind is not COMPRESSED:
                continue
            pa, ca = ArrayId(t.name, "pos", lv), ArrayId(t.name, "crd", lv)
            if pa.name in names:
                e = self.entry(pa)
                n = self.parents(out, lv)
                head.append(Alloc(self.decl(e, add(self.parents_bound(t, lv), 1))))
                head.append(Write(pa.name, ZERO, ZERO))
                if e.transfer:
                    tail.append(Store(f"{pa.name}_dram", pa.name, ZERO, add(n, 1), "innerPar"))
            if ca.name in names:
                head.append(Alloc(self.decl(self.entry(ca), ONE)))
        va = self.vals_id(t)
        if va.name not in names:
            return
        e = self.entry(va)
        if e.kind.is_queue:
            head.append(Alloc(self.decl(e, ONE)))
            return
        lo, hi = ZERO, ONE
        n: ValueExpr | None = ONE
        spanning = False
        for lv, kind in enumerate(t.format.levels):
            if not spanning and self.known(ctx, out.access, lv, outputs=True):
                p = self.out_position(ctx, out, lv)
                lo, hi = p, add(p, 1)
                continue
            spanning = True
            if kind is COMPRESSED:
                raise LoweringError(f"cannot stage {va.name}: level {lv + 1} is compressed and "
                                    f"not yet bound at {self.an.site_label(ctx.site)}")
            d = self.level_dim(t, lv)
            lo, hi = mul(lo, d), mul(hi, d)
            n = mul(n, d)
        head.append(Alloc(self.decl(e, n if n is not None else sub(hi, lo))))
        ctx.base[va.name] = lo
        if e.transfer:
            tail.append(Store(f"{va.name}_dram", va.name, lo, hi, "innerPar"))

    def parents(self, out: Output, lv: int) -> ValueExpr:
        """Number of positions of ``out`` at level ``lv - 1`` (run-time value)."""
        t = out.tensor
        n: ValueExpr = ONE
        for m in range(lv):
            if t.format.levels[m] is UNCOMPRESSED:
                n = mul(n, self.level_dim(t, m))
            else:
                n = Read(f"{t.name}{m + 1}_pos", n)
        return n

    def parents_bound(self, t, lv: int) -> ValueExpr:
        n: ValueExpr = ONE
        for m in range(lv):
            n = mul(n, self.level_dim(t, m))
        return n

    # -- statements -----------------------------------------------------------------------

    def lower_stmt(self, ctx: _Ctx, s: Stmt, path: Site) -> list:
        if isinstance(s, Forall):
            return self.lower_forall(ctx, s, path)
        if isinstance(s, SuchThat):
            return self.lower_stmt(ctx, s.body, path + (0,))
        if isinstance(s, Sequence):
            return (self.lower_stmt(ctx, s.first, path + (0,)) +
                    self.lower_stmt(ctx, s.second, path + (1,)))
        if isinstance(s, Where):
            return self.lower_where(ctx, s, path)
        if isinstance(s, (Assign, Increment)):
            return self.lower_assign(ctx, s)
        if isinstance(s, MappedCall):
            return self.lower_mapped(ctx, s, path)
        raise LoweringError(f"cannot lower {type(s).__name__}")

    def lower_where(self, ctx: _Ctx, s: Where, path: Site) -> list:
        out: list = []
        c = copy_of(s.producer)
        if c is not None:
            loops, lhs, _ = c
            copy = self.an.copies[lhs.tensor.name]
            sa = self.an.accesses[format_access(copy.source)]
            if loops:
                wanted = {e.array.name for e in self.plan.at_site(ctx.site, ("copy",))
                          if e.array.tensor == sa.name}
                self.stage(ctx, sa, wanted, out)
            else:
                value = self.read_access(ctx, copy.source, out, hoist=f"{sa.name}_hoisted")
                if not isinstance(value, Var):
                    name = f"{lhs.tensor.name}_hoisted"
                    out.append(Let(name, value))
                    value = Var(name)
                ctx.scalars[lhs.tensor.name] = value
            return out + self.lower_stmt(ctx, s.consumer, path + (0,))
        written = []
        for a in _assignments(s.producer):
            name = a.lhs.tensor.name
            if name in self.an.temps and self.an.temps[name] == ctx.site and name not in written \
                    and name not in self.an.copies and name not in ctx.temps:
                written.append(name)
        ctx.temps.update(written)
        for name in written:
            t = self.tensor(name)
            for a in _arrays_of(t):
                e = self.plan.entries.get(a.name)
                if e is None or e.kind is None:
                    continue
                size = self.parents_bound(t, t.order) if a.kind == "vals" else \
                    (add(self.parents_bound(t, a.level), 1) if a.kind == "pos" else ONE)
                out.append(Alloc(self.decl(e, size)))
                if e.kind is MemoryKind.REGISTER:
                    ctx.fresh.add(a.name)
                if a.kind == "pos":
                    out.append(Write(a.name, ZERO, ZERO))
        out += self.lower_stmt(ctx, s.producer, path + (1,))
        return out + self.lower_stmt(ctx, s.consumer, path + (0,))

    # -- loops ------------------------------------------------------------------------------

    def par(self, L: LoopInfo) -> str | int:
        if L.reduction is not None and L.innermost:
            c = L.reduction.const
            return c if c is not None else 1
        if L.parent is None and "outerPar" in self._bound_env():
            return "outerPar"
        return 1

    def _bound_env(self) -> set[str]:
        from ..cin.stmt import env_bindings
        return set(env_bindings(self.an.stmt))

    def ensure_segment(self, ctx: _Ctx, sa: SourceAccess, lv: int, L: LoopInfo, out: list):
        if (sa.key, lv) in ctx.seg:
            return
        pa = f"{sa.name}{lv + 1}_pos"
        parent, absent = self.position(ctx, sa, lv - 1)
        s_val: ValueExpr = Read(pa, self.local(ctx, pa, parent))
        e_val: ValueExpr = Read(pa, self.local(ctx, pa, add(parent, 1)))
        if absent:
            s_val = Select(_ge0(parent), s_val, ZERO)
            e_val = Select(_ge0(parent), e_val, ZERO)
        names = self.seg_names(L, sa)
        out += [Let(names[0], s_val), Let(names[1], e_val),
                Let(names[2], sub(Var(names[1]), Var(names[0])))]
        ctx.seg[(sa.key, lv)] = tuple(Var(n) for n in names)

    def bv_name(self, L: LoopInfo, raw: str) -> str:
        return f"{L.var}_{raw}"

    def header(self, ctx: _Ctx, L: LoopInfo, pre: list) -> tuple[ir.Header, dict]:
        """Emit pre-loop work for ``L`` and build its header.

        Returns the header and a dict describing per-iteration bindings.
        """
        for name, (sa, lv) in L.leaves.items():
            if sa.levels[lv] is COMPRESSED:
                self.ensure_segment(ctx, sa, lv, L, pre)
        for step in L.header.steps:
            if isinstance(step, GenBitVector):
                sa, lv = L.leaves[step.leaf]
                crd = f"{sa.name}{lv + 1}_crd"
                start, _, length = ctx.seg[(sa.key, lv)]
                pre.append(ir.GenBitVector(self.bv_name(L, step.bv), crd,
                                           self.local(ctx, crd, start), length,
                                           self.an.dim(L.var)))
            elif isinstance(step, CombineBitVectors):
                pre.append(ir.CombineBitVector(self.bv_name(L, step.out), step.op.boolean,
                                               self.bv_name(L, step.a), self.bv_name(L, step.b),
                                               self.an.dim(L.var)))
        loop = L.header.loop
        par = self.par(L)
        info: dict = {"out_index": None}
        if isinstance(loop, DenseLoop):
            h: ir.Header = Counter(L.var.name, L.extent, par)
            info["out_index"] = Var(L.var.name)
        elif isinstance(loop, PositionLoop):
            sa, lv = L.leaves[loop.leaf]
            _, _, length = ctx.seg[(sa.key, lv)]
            cname = f"{L.var}{sa.leaf}"
            h = Counter(cname, length, par, positions=True)
            info["out_index"] = Var(cname)
            info["counter"] = cname
        else:
            bvs = L.header.scan_operands()
            leaf_of = {bv: leaf for leaf, bv in L.header.leaf_bv.items()}
            pos_vars = tuple(f"{L.var}{leaf_of[b]}" if b in leaf_of else f"{L.var}_{b}_p"
                             for b in bvs)
            op = loop.op.boolean if isinstance(loop, DualScan) else None
            out_var = f"{L.var}_out"
            h = Scan(op, tuple(self.bv_name(L, b) for b in bvs), self.an.dim(L.var), pos_vars,
                     out_var, L.var.name, par)
            info["out_index"] = Var(out_var)
            info["scan_pos"] = dict(zip(bvs, pos_vars))
            info["union"] = op == "OR"
        return h, info

    def bind_iteration(self, ctx: _Ctx, L: LoopInfo, info: dict, body: list) -> None:
        """Per-iteration lets: coordinates, positions of every leaf."""
        loop = L.header.loop
        ctx.bound.add(L.var.name)
        for d, expr in L.derived:
            body.append(Let(d.name, expr))
            ctx.bound.add(d.name)
        for name, (sa, lv) in L.leaves.items():
            role = L.header.roles.get(name, Role.DENSE)
            if sa.levels[lv] is UNCOMPRESSED:
                continue
            start = ctx.seg[(sa.key, lv)][0]
            if role is Role.POSITIONS:
                counter = info["counter"]
                p = add(start, Var(counter))
                crd = f"{sa.name}{lv + 1}_crd"
                e = self.entry(ArrayId(sa.name, "crd", lv))
                if e.kind is not None and e.kind.is_queue:
                    body.append(ir.Dequeue(L.var.name, crd))
                else:
                    body.append(Let(L.var.name, Read(crd, self.local(ctx, crd, p))))
                ctx.pos[(sa.key, lv)] = (p, False)
            elif role is Role.SCAN:
                bv = L.header.leaf_bv[name]
                pv = Var(info["scan_pos"][bv])
                if info.get("union"):
                    pname = f"{L.var}{sa.leaf}_p"
                    body.append(Let(pname, Select(_ge0(pv), add(start, pv), Const(-1))))
                    ctx.pos[(sa.key, lv)] = (Var(pname), True)
                else:
                    ctx.pos[(sa.key, lv)] = (add(start, pv), False)
            else:
                bv = self.bv_name(L, L.header.leaf_bv[name])
                r = f"{L.var}{sa.leaf}_r"
                pname = f"{L.var}{sa.leaf}_p"
                body.append(Let(r, BitRank(bv, Var(L.var.name))))
                body.append(Let(pname, Select(_ge0(Var(r)), add(start, Var(r)), Const(-1))))
                ctx.pos[(sa.key, lv)] = (Var(pname), True)
        if isinstance(loop, PositionLoop) and not any(
                L.header.roles.get(n) is Role.POSITIONS for n in L.leaves):
            raise LoweringError(f"position loop at {L.label} lost its leaf")

    def output_levels(self, L: LoopInfo) -> list[tuple[Output, int]]:
        out = []
        for o in self.an.outputs.values():
            for lv, loop in enumerate(o.level_loop):
                if loop is L and o.access.levels[lv] is COMPRESSED:
                    out.append((o, lv))
        return out

    def lower_forall(self, ctx: _Ctx, s: Forall, path: Site) -> list:
        L = self.an.loops[path + (0,)]
        pre: list = []
        post: list = []
        h, info = self.header(ctx, L, pre)
        inner = ctx.child(L, L.id)
        body: list = []
        self.bind_iteration(inner, L, info, body)
        for o, lv in self.output_levels(L):
            self.output_level(ctx, inner, L, info, o, lv, h, pre, body, post)
        head, tail = self.site_allocations(inner)
        rest = head + self.lower_stmt(inner, s.body, path + (0,)) + tail
        if L.guard is not None:
            rest = [If(L.guard, tuple(rest))]
        loop = Foreach(h, tuple(body + rest))
        return pre + [loop] + post

    def output_level(self, ctx: _Ctx, inner: _Ctx, L: LoopInfo, info: dict, o: Output, lv: int,
                     h: ir.Header, pre: list, body: list, post: list) -> None:
        t = o.tensor
        pa, ca = f"{t.name}{lv + 1}_pos", f"{t.name}{lv + 1}_crd"
        mode = o.level_mode[lv]
        parent = self.out_position(ctx, o, lv - 1)
        if mode is not None and mode.mode == "alias":
            sa = mode.source
            start, end, length = ctx.seg[(sa.key, mode.source_level)]
            inner.outpos[(t.name, lv)] = inner.pos[(sa.key, mode.source_level)][0]
            base, count = start, length
            post.append(Write(pa, self.local(ctx, pa, add(parent, 1)), end))
        else:
            cnt = f"{L.var}{t.name}_cnt"
            loop = L.header.loop
            if isinstance(loop, PositionLoop):
                sa, slv = L.leaves[loop.leaf]
                pre.append(Let(cnt, ctx.seg[(sa.key, slv)][2]))
            elif isinstance(loop, DenseLoop):
                pre.append(Let(cnt, h.len))
            else:
                pre.append(Alloc(MemDecl(cnt, MemoryKind.REGISTER, ONE, zero=True)))
                pre.append(Reduce(cnt, h, (), ONE))
                pre.append(Let(f"{cnt}_v", Read(cnt)))
                cnt = f"{cnt}_v"
            start = f"{L.var}{t.name}_start"
            pre.append(Let(start, Read(pa, self.local(ctx, pa, parent))))
            pre.append(Write(pa, self.local(ctx, pa, add(parent, 1)), add(Var(start), Var(cnt))))
            inner.outpos[(t.name, lv)] = add(Var(start), info["out_index"])
            base, count = Var(start), Var(cnt)
        body.append(Enqueue(ca, Var(L.var.name)))
        if t.name in self.an.temps or t.on_chip:
            return
        if self.entry(ArrayId(t.name, "crd", lv)).transfer:
            post.append(StreamStore(f"{ca}_dram", ca, base, count))
        va = self.vals_id(t)
        if lv == t.order - 1 and self.entry(va).kind.is_queue:
            post.append(StreamStore(f"{va.name}_dram", va.name, base, count))

    # -- reductions --------------------------------------------------------------------------

    def lower_mapped(self, ctx: _Ctx, call: MappedCall, path: Site) -> list:
        if (call.backend, call.func) != ("Spatial", "Reduction"):
            raise LoweringError(f"no lowering for backend function {call.backend}.{call.func}")
        s = call.original
        if not isinstance(s, Forall):
            raise LoweringError("Reduction expects a loop nest")
        lhs = _innermost(s).lhs
        if lhs.tensor.order != 0:
            raise LoweringError("Reduction must accumulate into a scalar")
        reg = lhs.tensor.name
        fresh = reg in ctx.fresh
        ctx.fresh.discard(reg)
        return self.reduce(ctx, s, path + (0,), reg, accumulate=not fresh)

    def reduce(self, ctx: _Ctx, s: Forall, path: Site, reg: str, accumulate: bool = False
               ) -> list:
        L = self.an.loops[path + (0,)]
        pre: list = []
        h, info = self.header(ctx, L, pre)
        inner = ctx.child(L, L.id)
        body: list = []
        self.bind_iteration(inner, L, info, body)
        head, tail = self.site_allocations(inner)
        if tail:
            raise LoweringError(f"outputs cannot be staged inside a reduction ({L.label})")
        body += head
        if isinstance(s.body, Forall):
            sub_reg = f"{reg}_{s.body.var}"
            body.append(Alloc(MemDecl(sub_reg, MemoryKind.REGISTER, ONE, zero=True)))
            body += self.reduce(inner, s.body, path + (0,), sub_reg)
            value: ValueExpr = Read(sub_reg)
        elif isinstance(s.body, Increment) and s.body.lhs.tensor.order == 0:
            value = self.value(inner, s.body.rhs, body)
        else:
            raise LoweringError("Reduction body must be a loop nest around one increment")
        if L.guard is not None:
            value = Select(L.guard, value, ZERO)
        node = Reduce(reg, h, tuple(body), value)
        if accumulate:
            tmp = f"{reg}_part"
            return pre + [Alloc(MemDecl(tmp, MemoryKind.REGISTER, ONE, zero=True)),
                          dataclasses.replace(node, reg=tmp),
                          Write(reg, None, add(Read(reg), Read(tmp)))]
        return pre + [node]

    # -- expressions and assignments --------------------------------------------------------

    def read_access(self, ctx: _Ctx, acc: Access, out: list, hoist: str | None = None
                    ) -> ValueExpr:
        name = acc.tensor.name
        if name in ctx.scalars:
            return ctx.scalars[name]
        if name in self.an.temps and acc.tensor.order == 0:
            return Read(name)
        src = acc
        while src.tensor.name in self.an.copies:
            c = self.an.copies[src.tensor.name]
            mapping = dict(zip(c.vars, src.indices))
            src = Access(c.source.tensor, tuple(mapping.get(v, v) for v in c.source.indices))
        sa = self.an.accesses[format_access(src)]
        t = sa.tensor
        va = self.vals_id(t)
        e = self.entry(va)
        if t.order == 0:
            return Read(va.name)
        p, absent = self.position(ctx, sa, t.order - 1)
        if e.kind is None:
            value: ValueExpr = Read(f"{va.name}_dram", p)
        elif e.kind.is_queue:
            if va.name not in ctx.hoisted:
                let = hoist or f"{t.name}_hoisted"
                out.append(Dequeue(let, va.name))
                ctx.hoisted[va.name] = let
            return Var(ctx.hoisted[va.name])
        else:
            value = Read(va.name, self.local(ctx, va.name, p))
        if absent:
            value = Select(_ge0(p), value, ZERO)
        return value

    def value(self, ctx: _Ctx, e: Expr, out: list) -> ValueExpr:
        if isinstance(e, Access):
            return self.read_access(ctx, e, out)
        if isinstance(e, Literal):
            return Const(e.value)
        op = {Add: "+", Sub: "-", Mul: "*"}[type(e)]
        return BinOp(op, self.value(ctx, e.a, out), self.value(ctx, e.b, out))

    def lower_assign(self, ctx: _Ctx, s: Assign | Increment) -> list:
        out: list = []
        value = self.value(ctx, s.rhs, out)
        t = s.lhs.tensor
        inc = isinstance(s, Increment)
        if t.order == 0:
            ctx.fresh.discard(t.name)
            new = add(Read(t.name), value) if inc else value
            return out + [Write(t.name, None, new)]
        o = self.an.outputs[t.name]
        va = self.vals_id(t)
        e = self.entry(va)
        if e.kind.is_queue:
            if inc:
                raise LoweringError(f"cannot accumulate into streamed output {t.name}")
            return out + [Enqueue(va.name, value)]
        p = self.out_position(ctx, o, t.order - 1)
        addr = self.local(ctx, va.name, p)
        if not inc:
            return out + [Write(va.name, addr, value)]
        if e.kind is MemoryKind.SPARSE_SRAM:
            return out + [ir.AtomicUpdate(va.name, addr, value)]
        return out + [Write(va.name, addr, add(Read(va.name, addr), value))]

    # -- program -------------------------------------------------------------------------------

    def tensor_io(self, t, output: bool) -> TensorIO:
        arrays = []
        dims = tuple(f"{t.name}{m + 1}_dim" for m in range(t.order))
        for a in _arrays_of(t):
            lv = a.level
            name = f"{a.name}_dram"
            arrays.append((a.kind, lv, name))
            if output:
                if a.kind == "pos":
                    size = add(self.parents_bound(t, lv), 1)
                elif a.kind == "crd":
                    size = self.parents_bound(t, lv + 1)
                else:
                    size = self.parents_bound(t, t.order)
            else:
                size = Sym(f"{a.name}_len")
            e = self.plan.entries[a.name]
            zero = output and a.kind == "vals" and not (e.kind is not None and e.kind.is_queue)
            self.drams.append(MemDecl(name, e.dram or MemoryKind.DENSE_DRAM, size, zero=zero))
        return TensorIO(t.name, tuple(lv.short for lv in t.format.levels), t.format.mode_order,
                        dims, tuple(arrays))

    def lower(self) -> ir.PatternProgram:
        an = self.an
        inputs, outputs = [], []
        resident = []
        for t in an.stored_tensors():
            if t.name in an.temps:
                continue
            if t.on_chip:
                if t.name in an.outputs:
                    raise LoweringError(f"output {t.name} must live off-chip")
                resident.append(t)
                continue
            if t.name in an.outputs:
                outputs.append(self.tensor_io(t, True))
            else:
                inputs.append(self.tensor_io(t, False))
        ctx = _Ctx(TOP, None, {}, {}, {}, {}, {}, set(), {})
        head, tail = self.site_allocations(ctx)
        body = head + self.lower_stmt(ctx, an.body, ()) + tail
        aliases = []
        input_dims = {d for io in inputs for d in io.dims}
        for t in an.stored_tensors():
            if t.name in input_dims:
                continue
            for acc in an.tensor_accesses(t.name):
                for m, v in enumerate(acc.indices):
                    sym = f"{t.name}{m + 1}_dim"
                    canon = an.dims.get(v)
                    if sym not in input_dims and canon and canon != sym and \
                            (sym, canon) not in aliases:
                        aliases.append((sym, canon))
        res = tuple(TensorIO(t.name, tuple(lv.short for lv in t.format.levels),
                             t.format.mode_order, tuple(f"{t.name}{m + 1}_dim"
                                                        for m in range(t.order)),
                             tuple((a.kind, a.level, a.name) for a in _arrays_of(t)))
                    for t in resident)
        return ir.PatternProgram(self.name, tuple(self.drams), tuple(body), tuple(inputs),
                                 tuple(outputs), tuple(aliases),
                                 tuple(sorted(an.env.items())), tuple(an.diagnostics), res)


def _arrays_of(t) -> list[ArrayId]:
    from ..memory import tensor_arrays
    return tensor_arrays(t.name, t.format.levels)


def _assignments(s: Stmt):
    from ..cin.stmt import assignments
    return assignments(s)


def _innermost(s: Stmt):
    while isinstance(s, Forall):
        s = s.body
    return s


def lower(s: Stmt, plan: MemoryPlan | None = None, name: str = "kernel") -> ir.PatternProgram:
    """Lower ``s`` (with an optional precomputed memory plan) to a pattern program."""
    return Lowerer(s, plan, name).lower()
