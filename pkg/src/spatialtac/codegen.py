"""Spatial-style source text for pattern programs, and structural checks on it."""

from __future__ import annotations

import dataclasses
import re
from typing import Iterable, Sequence

from .lowering import ir
from .lowering.ir import MemoryKind, PatternProgram

_PAR_NAMES = {"innerPar": "ip", "outerPar": "bp"}

_DECL = {
    MemoryKind.DENSE_SRAM: "SRAM",
    MemoryKind.SPARSE_SRAM: "SparseSRAM",
    MemoryKind.FIFO: "FIFO",
    MemoryKind.BIT_VECTOR: "BitVecFIFO",
    MemoryKind.REGISTER: "Reg",
    MemoryKind.DENSE_DRAM: "DRAM",
    MemoryKind.SPARSE_DRAM: "SparseDRAM",
}
_KIND_OF = {v: k for k, v in _DECL.items()}


class EmitError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class EmitConfig:
    type_name: str = "T"
    element: str = "Int"
    indent: int = 2
    env: tuple[tuple[str, int], ...] | None = None  # None: take the program's


# -- expressions ---------------------------------------------------------------------

def _atomic(e: ir.ValueExpr) -> bool:
    return not isinstance(e, ir.BinOp) and not (
        isinstance(e, ir.Const) and isinstance(e.value, (int, float)) and e.value < 0)


def format_value(e: ir.ValueExpr, registers: frozenset[str] = frozenset()) -> str:
    def f(x: ir.ValueExpr) -> str:
        return format_value(x, registers)

    def wrap(x: ir.ValueExpr) -> str:
        return f(x) if _atomic(x) else f"({f(x)})"

    if isinstance(e, ir.Const):
        v = e.value
        if isinstance(v, bool):
            return "true" if v else "false"
        return repr(v) if isinstance(v, float) else str(v)
    if isinstance(e, ir.Sym):
        return _PAR_NAMES.get(e.name, e.name)
    if isinstance(e, ir.Var):
        return e.name
    if isinstance(e, ir.Read):
        if e.addr is None:
            return e.mem
        return f"{e.mem}({wrap(e.addr)})"
    if isinstance(e, ir.BinOp):
        if e.op in ("min", "max"):
            return f"{e.op}({f(e.a)}, {f(e.b)})"
        op = "&&" if e.op == "and" else e.op
        return f"{wrap(e.a)} {op} {wrap(e.b)}"
    if isinstance(e, ir.Select):
        return f"mux({f(e.cond)}, {f(e.a)}, {f(e.b)})"
    if isinstance(e, ir.BitRank):
        return f"{e.bv}.rank({f(e.idx)})"
    raise EmitError(f"cannot print {e!r}")


def _range(start: ir.ValueExpr, end: ir.ValueExpr) -> str:
    def wrap(x):
        return format_value(x) if _atomic(x) else f"({format_value(x)})"
    return f"{wrap(start)}::{wrap(end)}"


def _par(p: str | int) -> str:
    return _PAR_NAMES.get(p, str(p)) if isinstance(p, str) else str(p)


# -- emission ------------------------------------------------------------------------

class _Emitter:
    def __init__(self, p: PatternProgram, cfg: EmitConfig):
        self.p, self.cfg = p, cfg
        self.lines: list[str] = []
        self.declared: set[str] = {d.name for d in p.drams}
        self.T = cfg.type_name

    def out(self, depth: int, text: str) -> None:
        self.lines.append(" " * (self.cfg.indent * depth) + text)

    def v(self, e) -> str:
        return format_value(e)

    def check(self, name: str) -> None:
        if name not in self.declared:
            raise EmitError(f"reference to undeclared memory {name}")

    def expr_refs(self, e) -> None:
        for name in ir.expr_reads(e):
            self.check(name)

    def header(self) -> None:
        T = self.T
        env = self.cfg.env if self.cfg.env is not None else self.p.env
        self.out(0, "// Spatial header code")
        self.out(0, "import spatial.dsl._")
        self.out(0, f"// kernel {self.p.name}")
        self.out(0, f"type {T} = {self.cfg.element}")
        for name, value in env:
            self.out(0, f"val {_PAR_NAMES.get(name, name)} = {value}")
        syms = sorted(self.sizes())
        for s in syms:
            self.out(0, f"val {s} = ArgIn[Int]")
        alias = dict(self.p.dim_aliases)
        for s in sorted(alias):
            if s not in syms:
                self.out(0, f"val {s} = {alias[s]}")
        self.out(0, "")
        self.out(0, "// Initialize all DRAM arrays")
        for d in self.p.drams:
            zero = "  // host zero-fills" if d.zero else ""
            self.out(0, f"val {d.name} = {_DECL[d.kind]}[{T}]({self.v(d.size)}){zero}")
        self.out(0, "")

    def sizes(self) -> set[str]:
        out = set()
        for io in self.p.inputs + self.p.resident:
            out.update(io.dims)
        for d in self.p.drams:
            out.update(_syms(d.size))
        env = {n for n, _ in self.p.env} | set(_PAR_NAMES)
        out -= env
        out -= {s for s, _ in self.p.dim_aliases}
        return out

    def block(self, body: Sequence[ir.Node], depth: int) -> None:
        for n in body:
            self.node(n, depth)

    def node(self, n: ir.Node, d: int) -> None:
        T = self.T
        if isinstance(n, ir.Alloc):
            m = n.mem
            self.declared.add(m.name)
            if m.kind is MemoryKind.REGISTER:
                self.out(d, f"val {m.name} = Reg[{T}](0.to[{T}])")
            elif m.kind.is_queue:
                self.out(d, f"val {m.name} = {_DECL[m.kind]}[{T}]({m.depth})")
            else:
                zero = "  // starts at zero" if m.zero else ""
                self.out(d, f"val {m.name} = {_DECL[m.kind]}[{T}]({self.v(m.size)}){zero}")
        elif isinstance(n, ir.Load):
            self.check(n.dst)
            self.check(n.src)
            self.out(d, f"{n.dst} load {n.src}({_range(n.start, n.end)} par {_par(n.par)})")
        elif isinstance(n, ir.Store):
            self.check(n.dst)
            self.check(n.src)
            self.out(d, f"{n.dst}({_range(n.start, n.end)} par {_par(n.par)}) store {n.src}")
        elif isinstance(n, ir.StreamStore):
            self.check(n.dst)
            self.check(n.fifo)
            self.out(d, f"{n.dst} stream_store_vec({self.v(n.base)}, {n.fifo}, "
                        f"{self.v(n.length)})")
        elif isinstance(n, ir.Let):
            self.expr_refs(n.value)
            self.out(d, f"val {n.name} = {self.v(n.value)}")
        elif isinstance(n, ir.Dequeue):
            self.check(n.fifo)
            self.out(d, f"val {n.name} = {n.fifo}.deq")
        elif isinstance(n, ir.Write):
            self.check(n.mem)
            self.expr_refs(n.value)
            if n.addr is None:
                self.out(d, f"{n.mem} := {self.v(n.value)}")
            else:
                self.out(d, f"{n.mem}({self.v(n.addr)}) = {self.v(n.value)}")
        elif isinstance(n, ir.Enqueue):
            self.check(n.fifo)
            self.expr_refs(n.value)
            self.out(d, f"{n.fifo}.enq({self.v(n.value)})")
        elif isinstance(n, ir.AtomicUpdate):
            self.check(n.mem)
            self.out(d, f"{n.mem}.RMW({self.v(n.addr)}, {self.v(n.value)}, \"{n.op}\")")
        elif isinstance(n, ir.GenBitVector):
            self.check(n.src)
            self.declared.add(n.bv)
            self.out(d, f"val {n.bv} = GenBitVector({n.src}, {self.v(n.start)}, "
                        f"{self.v(n.count)}, {self.v(n.extent)})")
        elif isinstance(n, ir.CombineBitVector):
            self.declared.add(n.bv)
            op = "&" if n.op == "AND" else "|"
            self.out(d, f"val {n.bv} = {n.a} {op} {n.b}")
        elif isinstance(n, ir.Foreach):
            self.out(d, f"Foreach {self.header_text(n.header)} {{ {self.binder(n.header)} =>")
            self.block(n.body, d + 1)
            self.out(d, "}")
        elif isinstance(n, ir.Reduce):
            self.check(n.reg)
            self.out(d, f"Reduce({n.reg}){self.header_text(n.header)} "
                        f"{{ {self.binder(n.header)} =>")
            self.block(n.body, d + 1)
            self.out(d + 1, self.v(n.value))
            self.out(d, f"}} {{ _ {n.combiner} _ }}")
        elif isinstance(n, ir.If):
            self.out(d, f"if ({self.v(n.cond)}) {{")
            self.block(n.body, d + 1)
            self.out(d, "}")
        elif isinstance(n, ir.Assert):
            self.out(d, f"assert({self.v(n.cond)}, \"{n.message}\")")
        else:
            raise EmitError(f"unknown node {n!r}")

    def header_text(self, h: ir.Header) -> str:
        if isinstance(h, ir.Counter):
            if h.start == ir.ZERO:
                return f"({self.v(h.len)} by 1 par {_par(h.par)})"
            end = ir.add(h.start, h.len)
            return f"({self.v(h.start)} until {self.v(end)} by 1 par {_par(h.par)})"
        for b in h.bvs:
            self.check(b)
        if h.op is None:
            return f"(Scan({_par(h.par)}, {self.v(h.extent)}, {h.bvs[0]}))"
        return (f"(ScanCo({_par(h.par)}, {self.v(h.extent)}, {h.bvs[0]}, {h.bvs[1]}, "
                f"{h.op}))")

    def binder(self, h: ir.Header) -> str:
        if isinstance(h, ir.Counter):
            return h.var
        names = list(h.pos_vars) + [h.out_var, h.idx_var]
        return f"case ({', '.join(names)})"

    def emit(self) -> str:
        self.header()
        self.out(0, "Accel {")
        self.block(self.p.body, 1)
        self.out(0, "}")
        return "\n".join(self.lines) + "\n"


def _syms(e) -> set[str]:
    if isinstance(e, ir.Sym):
        return {e.name}
    out = set()
    for c in ir.expr_children(e):
        out |= _syms(c)
    return out


def emit(p: PatternProgram, cfg: EmitConfig | None = None) -> str:
    """Spatial-style source text for ``p``; identical programs give identical text."""
    return _Emitter(p, cfg or EmitConfig()).emit()


def empty_program(name: str = "empty") -> PatternProgram:
    return PatternProgram(name, (), (), (), ())


_DECL_RE = re.compile(r"^\s*val\s+(\w+)\s*=\s*(\w+)\[\w+\]\(([^)]*)\)")


def parse_declarations(text: str) -> dict[str, MemoryKind]:
    """Memory kind of every ``val X = KIND[T](...)`` declaration in ``text``."""
    out = {}
    for line in text.splitlines():
        m = _DECL_RE.match(line)
        if m and m.group(2) in _KIND_OF:
            out[m.group(1)] = _KIND_OF[m.group(2)]
    return out


def bindings_from_text(text: str) -> tuple[dict[str, MemoryKind], dict[str, MemoryKind]]:
    """Split reparsed declarations into on-chip and DRAM maps keyed by array name."""
    decls = parse_declarations(text)
    onchip, dram = {}, {}
    for name, kind in decls.items():
        if kind.off_chip:
            dram[name[:-len("_dram")] if name.endswith("_dram") else name] = kind
        else:
            onchip[name] = kind
    return onchip, dram


# -- structural checks ---------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Expectation:
    """One required construct in emitted text.

    ``kind`` is one of:

    * ``memory``: ``target`` is declared with memory ``params["kind"]``
      (and FIFO ``params["depth"]`` when given);
    * ``load``: ``target`` is loaded from DRAM, optionally over
      ``params["range"]`` (text between the parentheses before ``par``);
    * ``reduce``: a Reduce over ``params["extent"]`` with combiner
      ``params["combiner"]``;
    * ``enqueue``: something is enqueued into ``target``;
    * ``write_tail``: ``target`` is written in ``scope`` after the scope's
      inner loops;
    * ``stream_store``: ``target`` is stream-stored with ``params["base"]``
      and ``params["length"]``.

    ``scope`` names the binder of the innermost enclosing pattern (``"top"``
    for the Accel block itself); None means anywhere.
    """

    kind: str
    target: str = ""
    scope: str | None = None
    params: tuple[tuple[str, object], ...] = ()

    def param(self, key: str, default=None):
        return dict(self.params).get(key, default)

    def __str__(self) -> str:
        extra = ", ".join(f"{k}={getattr(v, 'value', v)}" for k, v in self.params)
        where = f" in {self.scope}" if self.scope else ""
        return f"{self.kind} {self.target}{where}" + (f" ({extra})" if extra else "")


def expect(what: str, target: str = "", scope: str | None = None, /, **params) -> Expectation:
    return Expectation(what, target, scope, tuple(sorted(params.items(), key=lambda kv: kv[0])))


@dataclasses.dataclass
class CheckResult:
    expectation: Expectation
    passed: bool
    line: int | None
    detail: str


@dataclasses.dataclass
class CheckReport:
    results: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            at = f" (line {r.line})" if r.line is not None else ""
            out.append(f"{'PASS' if r.passed else 'FAIL'} {r.expectation}{at}: {r.detail}")
        return out


@dataclasses.dataclass
class _Line:
    no: int
    text: str
    scopes: tuple[str, ...]  # binders from outermost to innermost
    opens: str | None        # binder opened by this line
    index: int


_OPEN = re.compile(r"\{\s*(?:case\s*\(([^)]*)\)|(\w+))\s*=>\s*$")


def _scan_lines(text: str) -> list[_Line]:
    out: list[_Line] = []
    stack: list[str] = []
    for k, raw in enumerate(text.splitlines()):
        line = raw.split("//", 1)[0].rstrip()
        stripped = line.strip()
        if stripped.startswith("}"):
            if stack:
                stack.pop()
            out.append(_Line(k + 1, stripped, tuple(stack), None, len(out)))
            continue
        opens = None
        if stripped.startswith("Accel") and stripped.endswith("{"):
            opens = "top"
        else:
            m = _OPEN.search(stripped)
            if m:
                names = m.group(1) or m.group(2)
                opens = names.split(",")[-1].strip() if m.group(1) else names
                if m.group(1):
                    # scans bind (positions..., out, index); name the scope by the index
                    opens = names.split(",")[-1].strip()
            elif stripped.endswith("{"):
                opens = "block"
        out.append(_Line(k + 1, stripped, tuple(stack), opens, len(out)))
        if opens:
            stack.append(opens)
    return out


def _innermost(ln: _Line) -> str | None:
    for s in reversed(ln.scopes):
        if s != "block":
            return s
    return None


def _scope_ok(ln: _Line, scope: str | None) -> bool:
    return scope is None or _innermost(ln) == scope


def _check(e: Expectation, lines: list[_Line]) -> CheckResult:
    t = re.escape(e.target)
    if e.kind == "memory":
        want = e.param("kind")
        want_kind = want if isinstance(want, MemoryKind) else MemoryKind(want)
        pat = re.compile(rf"^val\s+{t}\s*=\s*(\w+)\[\w+\]\(([^)]*)\)")
        for ln in lines:
            m = pat.match(ln.text)
            if not m:
                continue
            got = _KIND_OF.get(m.group(1))
            if got is not want_kind:
                return CheckResult(e, False, ln.no, f"declared as {m.group(1)}")
            depth = e.param("depth")
            if depth is not None and m.group(2).strip() != str(depth):
                return CheckResult(e, False, ln.no, f"depth {m.group(2)}, expected {depth}")
            if not _scope_ok(ln, e.scope):
                return CheckResult(e, False, ln.no, f"declared in {_innermost(ln)}")
            return CheckResult(e, True, ln.no, f"{m.group(1)} declaration")
        return CheckResult(e, False, None, "no declaration found")
    if e.kind == "load":
        pat = re.compile(rf"^{t} load \w+\((.*) par \w+\)$")
        seen = []
        for ln in lines:
            m = pat.match(ln.text)
            if not m:
                continue
            rng = e.param("range")
            if (rng is None or m.group(1) == rng) and _scope_ok(ln, e.scope):
                return CheckResult(e, True, ln.no, ln.text)
            seen.append(ln)
        if seen:
            ln = seen[0]
            return CheckResult(e, False, ln.no, f"found {ln.text!r} in {_innermost(ln)}")
        return CheckResult(e, False, None, "no load found")
    if e.kind == "reduce":
        ext = re.escape(str(e.param("extent", "")))
        comb = re.escape(str(e.param("combiner", "+")))
        pat = re.compile(rf"^Reduce\((\w+)\)\({ext} by 1 par \w+\)")
        for ln in lines:
            if not pat.match(ln.text) or not _scope_ok(ln, e.scope):
                continue
            depth = len(ln.scopes)
            for later in lines[ln.index + 1:]:
                if later.text.startswith("}") and len(later.scopes) == depth:
                    if re.fullmatch(rf"\}}\s*\{{\s*_\s*{comb}\s*_\s*\}}", later.text):
                        return CheckResult(e, True, ln.no, ln.text)
                    return CheckResult(e, False, later.no, f"combiner {later.text!r}")
        return CheckResult(e, False, None, "no matching Reduce found")
    if e.kind == "enqueue":
        pat = re.compile(rf"^{t}\.enq\(")
        for ln in lines:
            if pat.match(ln.text) and _scope_ok(ln, e.scope):
                return CheckResult(e, True, ln.no, ln.text)
        return CheckResult(e, False, None, "no enqueue found")
    if e.kind == "write_tail":
        pat = re.compile(rf"^{t}\(.*\)\s*=[^=]")
        for ln in lines:
            if not pat.match(ln.text) or not _scope_ok(ln, e.scope):
                continue
            # no loop of the same scope may open after this write
            depth = len(ln.scopes)
            for later in lines[ln.index + 1:]:
                if len(later.scopes) < depth:
                    break
                if len(later.scopes) == depth and later.opens not in (None, "block"):
                    return CheckResult(e, False, ln.no, "a loop follows the write")
            return CheckResult(e, True, ln.no, ln.text)
        return CheckResult(e, False, None, "no write found")
    if e.kind == "stream_store":
        pat = re.compile(rf"^\w+ stream_store_vec\((.*), {t}, (.*)\)$")
        for ln in lines:
            m = pat.match(ln.text)
            if not m or not _scope_ok(ln, e.scope):
                continue
            base, length = e.param("base"), e.param("length")
            if (base is None or m.group(1) == base) and (length is None or m.group(2) == length):
                return CheckResult(e, True, ln.no, ln.text)
            return CheckResult(e, False, ln.no, f"base {m.group(1)}, length {m.group(2)}")
        return CheckResult(e, False, None, "no stream store found")
    if e.kind == "text":
        for ln in lines:
            if e.target in ln.text and _scope_ok(ln, e.scope):
                return CheckResult(e, True, ln.no, ln.text)
        return CheckResult(e, False, None, "text not found")
    return CheckResult(e, False, None, f"unknown expectation kind {e.kind!r}")


def structural_check(text: str, expectations: Iterable[Expectation]) -> CheckReport:
    """Check each expectation against ``text``; failures carry line references."""
    lines = _scan_lines(text)
    return CheckReport([_check(e, lines) for e in expectations])


def sddmm_expectations() -> list[Expectation]:
    """The reference structure of the SDDMM kernel."""
    K = MemoryKind
    return [
        expect("memory", "B2_pos", "top", kind=K.DENSE_SRAM),
        expect("load", "B2_pos", "top", range="0::(B1_dim + 1)"),
        expect("memory", "B2_crd", "i", kind=K.FIFO, depth=16),
        expect("load", "B2_crd", "i", range="jB_start::jB_end"),
        expect("memory", "B_vals", "i", kind=K.FIFO, depth=16),
        expect("load", "B_vals", "i", range="jB_start::jB_end"),
        expect("memory", "C_vals", "jB", kind=K.DENSE_SRAM),
        expect("load", "C_vals", "jB"),
        expect("memory", "D_vals", "jB", kind=K.DENSE_SRAM),
        expect("load", "D_vals", "jB"),
        expect("reduce", "", "jB", extent="D1_dim", combiner="+"),
        expect("enqueue", "A_vals", "jB"),
        expect("enqueue", "A2_crd", "jB"),
        expect("write_tail", "A2_pos", "i"),
        expect("stream_store", "A_vals", "i", base="jB_start", length="jB_len"),
    ]
