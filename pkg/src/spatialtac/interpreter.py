"""Deterministic sequential execution of pattern programs."""

from __future__ import annotations

import collections
import dataclasses
import json
import operator
from typing import Any, Callable, Mapping

import numpy as np

from .lowering import ir
from .lowering.bitvector import combine, num_words, pack_bitvector, rank, scan
from .lowering.ir import MemoryKind, PatternProgram
from .tensor import COMPRESSED, PackedTensor, TensorFormat, LevelFormat


class ExecutionError(RuntimeError):
    """A pattern program did something the machine model forbids."""


class FifoUnderflow(ExecutionError):
    pass


class FifoOverflow(ExecutionError):
    pass


class FifoDisciplineError(ExecutionError):
    pass


class UninitializedRead(ExecutionError):
    pass


class CapacityError(ExecutionError):
    pass


class InvariantViolation(ExecutionError):
    """A packed tensor (input or produced output) breaks a storage invariant."""


@dataclasses.dataclass
class RunStats:
    dram_words_loaded: int = 0
    dram_words_stored: int = 0
    scan_invocations: int = 0
    scan_words_processed: int = 0
    pattern_iterations: dict[str, int] = dataclasses.field(default_factory=dict)
    fifo_enqueues: int = 0
    fifo_dequeues: int = 0
    atomic_updates: int = 0
    dram_loads: dict[str, list[int]] = dataclasses.field(default_factory=dict)
    fifo_traffic: dict[str, list[int]] = dataclasses.field(default_factory=dict)  # [enq, deq]

    def summary(self) -> dict[str, int]:
        """The scalar counters, in a fixed order."""
        return {
            "dram_words_loaded": self.dram_words_loaded,
            "dram_words_stored": self.dram_words_stored,
            "scan_invocations": self.scan_invocations,
            "scan_words_processed": self.scan_words_processed,
            "pattern_iterations": sum(self.pattern_iterations.values()),
            "fifo_enqueues": self.fifo_enqueues,
            "fifo_dequeues": self.fifo_dequeues,
            "atomic_updates": self.atomic_updates,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(dataclasses.asdict(self), indent=indent, sort_keys=True)


# -- memories ------------------------------------------------------------------------

class Sram:
    __slots__ = ("name", "size", "cells", "zero", "kind")

    def __init__(self, name: str, size: int, zero: bool, kind: MemoryKind):
        self.name, self.size, self.zero, self.kind = name, size, zero, kind
        self.cells: dict[int, Any] = {}

    def _check(self, addr: int) -> int:
        addr = int(addr)
        if not 0 <= addr < self.size:
            raise CapacityError(f"{self.name}[{addr}] is outside its {self.size} cells")
        return addr

    def read(self, addr):
        addr = self._check(addr)
        v = self.cells.get(addr)
        if v is None:
            if self.zero:
                return 0
            raise UninitializedRead(f"{self.name}[{addr}] read before it was written")
        return v

    def write(self, addr, value) -> None:
        self.cells[self._check(addr)] = value


class Fifo:
    __slots__ = ("name", "capacity", "depth", "q", "enq", "deq", "kind")

    def __init__(self, name: str, capacity: int, depth: int | None, kind: MemoryKind):
        self.name, self.capacity, self.depth, self.kind = name, capacity, depth, kind
        self.q: collections.deque = collections.deque()
        self.enq = self.deq = 0

    def push(self, value) -> None:
        if len(self.q) >= self.capacity:
            raise FifoOverflow(f"FIFO {self.name} holds {self.capacity} elements already")
        self.q.append(value)
        self.enq += 1

    def pop(self):
        if not self.q:
            raise FifoUnderflow(f"dequeue from empty FIFO {self.name}")
        self.deq += 1
        return self.q.popleft()


class Register:
    __slots__ = ("name", "value")

    def __init__(self, name: str, zero: bool):
        self.name = name
        self.value = 0 if zero else None

    def read(self):
        if self.value is None:
            raise UninitializedRead(f"register {self.name} read before it was written")
        return self.value


class Dram:
    __slots__ = ("name", "data")

    def __init__(self, name: str, data: list):
        self.name, self.data = name, data

    def _check(self, start: int, end: int) -> None:
        if not 0 <= start <= end <= len(self.data):
            raise CapacityError(f"{self.name}[{start}:{end}] is outside its {len(self.data)} words")

    def read(self, addr):
        addr = int(addr)
        self._check(addr, addr + 1)
        v = self.data[addr]
        if v is None:
            raise UninitializedRead(f"{self.name}[{addr}] read before it was written")
        return v


@dataclasses.dataclass
class MachineState:
    """All memories of one execution.

    Variables and on-chip memories live in flat name tables; allocations are
    removed again when the body that made them finishes an iteration.
    """

    dram: dict[str, Dram]
    onchip: dict[str, Any]
    bitvectors: dict[str, list[int]]
    vars: dict[str, Any]
    syms: dict[str, int]

    @property
    def fifos(self) -> dict[str, Fifo]:
        return {k: v for k, v in self.onchip.items() if isinstance(v, Fifo)}

    @property
    def registers(self) -> dict[str, Register]:
        return {k: v for k, v in self.onchip.items() if isinstance(v, Register)}

    @property
    def sram(self) -> dict[str, Sram]:
        return {k: v for k, v in self.onchip.items() if isinstance(v, Sram)}


# -- expressions ---------------------------------------------------------------------

def _div(a, b):
    if isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer)):
        return a // b
    return a / b


_BINOPS: dict[str, Callable] = {
    "+": operator.add, "-": operator.sub, "*": operator.mul, "/": _div, "%": operator.mod,
    "min": min, "max": max, "<": operator.lt, "<=": operator.le, "==": operator.eq,
    "!=": operator.ne, ">=": operator.ge, ">": operator.gt,
    "and": lambda a, b: bool(a) and bool(b),
}

_COMBINERS: dict[str, Callable] = {"+": operator.add, "max": max, "min": min}


class _Machine:
    def __init__(self, program: PatternProgram, state: MachineState, resident: dict,
                 strict: bool):
        self.p = program
        self.st = state
        self.stats = RunStats()
        self.resident = resident
        self.strict = strict
        self.word = int(state.syms.get("bitvector_word", 32))
        self.labels: dict[int, str] = {}
        self._compiled: dict[int, Callable] = {}
        self._label(program.body, collections.Counter())

    def _label(self, body, seen) -> None:
        for n in body:
            if isinstance(n, (ir.Foreach, ir.Reduce)):
                h = n.header
                var = h.var if isinstance(h, ir.Counter) else h.idx_var
                base = f"{type(n).__name__}({var})"
                seen[base] += 1
                self.labels[id(n)] = base if seen[base] == 1 else f"{base}#{seen[base]}"
            if isinstance(n, (ir.Foreach, ir.Reduce, ir.If)):
                self._label(n.body, seen)

    # expressions are compiled to closures once per node object
    def ev(self, e: ir.ValueExpr):
        f = self._compiled.get(id(e))
        if f is None:
            f = self._compiled[id(e)] = self._compile(e)
        return f()

    def _compile(self, e: ir.ValueExpr) -> Callable:
        st = self.st
        if isinstance(e, ir.Const):
            v = e.value
            return lambda: v
        if isinstance(e, ir.Sym):
            name = e.name

            def sym():
                try:
                    return st.syms[name]
                except KeyError:
                    raise ExecutionError(f"unbound size symbol {name}") from None
            return sym
        if isinstance(e, ir.Var):
            name = e.name

            def var():
                try:
                    return st.vars[name]
                except KeyError:
                    raise ExecutionError(f"variable {name} has no value") from None
            return var
        if isinstance(e, ir.BinOp):
            fa, fb, op = self._compile(e.a), self._compile(e.b), _BINOPS[e.op]
            return lambda: op(fa(), fb())
        if isinstance(e, ir.Select):
            fc, fa, fb = self._compile(e.cond), self._compile(e.a), self._compile(e.b)
            return lambda: fa() if fc() else fb()
        if isinstance(e, ir.BitRank):
            fi, bv, word = self._compile(e.idx), e.bv, self.word
            return lambda: rank(self.bitvector(bv), fi(), word)
        if isinstance(e, ir.Read):
            mem = e.mem
            if e.addr is None:
                return lambda: self.memory(mem).read()
            fa = self._compile(e.addr)
            return lambda: self.memory(mem).read(fa())
        raise TypeError(f"not a value expression: {e!r}")

    def memory(self, name: str):
        m = self.st.onchip.get(name)
        if m is None:
            m = self.st.dram.get(name)
        if m is None:
            raise ExecutionError(f"memory {name} is not allocated here")
        return m

    def onchip(self, name: str, kind: type):
        m = self.st.onchip.get(name)
        if not isinstance(m, kind):
            what = "not allocated" if m is None else f"a {type(m).__name__}"
            raise ExecutionError(f"{name} is {what}, expected a {kind.__name__}")
        return m

    def bitvector(self, name: str) -> list[int]:
        try:
            return self.st.bitvectors[name]
        except KeyError:
            raise ExecutionError(f"bit vector {name} was never generated") from None

    # statements
    def run(self, body) -> None:
        made: list[str] = []
        for n in body:
            self.step(n, made)
        self.release(made)

    def release(self, made: list[str]) -> None:
        for name in made:
            m = self.st.onchip.pop(name, None)
            if isinstance(m, Fifo):
                if self.strict and m.q:
                    raise FifoDisciplineError(
                        f"FIFO {name} still holds {len(m.q)} elements at the end of its scope")
            self.st.bitvectors.pop(name, None)

    def step(self, n, made: list[str]) -> None:
        st, stats = self.st, self.stats
        t = type(n)
        if t is ir.Let:
            st.vars[n.name] = self.ev(n.value)
        elif t is ir.Dequeue:
            st.vars[n.name] = self.pop(n.fifo)
        elif t is ir.Enqueue:
            self.push(n.fifo, self.ev(n.value))
        elif t is ir.Write:
            value = self.ev(n.value)
            if n.addr is None:
                self.onchip(n.mem, Register).value = value
            else:
                self.onchip(n.mem, Sram).write(self.ev(n.addr), value)
        elif t is ir.AtomicUpdate:
            m = self.onchip(n.mem, Sram)
            addr = self.ev(n.addr)
            m.write(addr, _COMBINERS[n.op](m.read(addr), self.ev(n.value)))
            stats.atomic_updates += 1
        elif t is ir.Foreach:
            label = self.labels[id(n)]
            for _ in self.iterate(n.header):
                stats.pattern_iterations[label] = stats.pattern_iterations.get(label, 0) + 1
                self.run(n.body)
            stats.pattern_iterations.setdefault(label, 0)
        elif t is ir.Reduce:
            label = self.labels[id(n)]
            reg = self.onchip(n.reg, Register)
            comb = _COMBINERS[n.combiner]
            acc = None
            for _ in self.iterate(n.header):
                stats.pattern_iterations[label] = stats.pattern_iterations.get(label, 0) + 1
                inner: list[str] = []
                for c in n.body:
                    self.step(c, inner)
                v = self.ev(n.value)
                self.release(inner)
                acc = v if acc is None else comb(acc, v)
            stats.pattern_iterations.setdefault(label, 0)
            reg.value = 0 if acc is None else acc
        elif t is ir.If:
            if self.ev(n.cond):
                self.run(n.body)
        elif t is ir.Alloc:
            self.alloc(n.mem)
            made.append(n.mem.name)
        elif t is ir.Load:
            self.load(n)
        elif t is ir.Store:
            self.store(n)
        elif t is ir.StreamStore:
            self.stream_store(n)
        elif t is ir.GenBitVector:
            extent = int(self.ev(n.extent))
            count = int(self.ev(n.count))
            src = self.memory(n.src)
            if isinstance(src, Fifo):
                crd = [self.pop(n.src) for _ in range(count)]
            else:
                start = int(self.ev(n.start))
                crd = [src.read(start + k) for k in range(count)]
            st.bitvectors[n.bv] = pack_bitvector(crd, extent, self.word)
            made.append(n.bv)
        elif t is ir.CombineBitVector:
            a, b = self.bitvector(n.a), self.bitvector(n.b)
            if len(a) != len(b):
                raise ExecutionError(f"cannot combine {n.a} and {n.b}: extents differ")
            st.bitvectors[n.bv] = combine(a, b, n.op)
            made.append(n.bv)
        elif t is ir.Assert:
            if not self.ev(n.cond):
                raise ExecutionError(f"assertion failed: {n.message}")
        else:
            raise TypeError(f"unknown pattern node {n!r}")

    def iterate(self, h):
        vars_ = self.st.vars
        if isinstance(h, ir.Counter):
            start, length = self.ev(h.start), self.ev(h.len)
            for k in range(int(start), int(start) + int(length)):
                vars_[h.var] = k
                yield k
            return
        extent = int(self.ev(h.extent))
        words = num_words(extent, self.word)
        ops = [self.bitvector(b) for b in h.bvs]
        for b, vec in zip(h.bvs, ops):
            if len(vec) != words:
                raise ExecutionError(
                    f"scan over extent {extent} given bit vector {b} of {len(vec)} words")
        self.stats.scan_invocations += 1
        self.stats.scan_words_processed += words * len(ops)
        for ranks, out, idx in scan(ops, h.op, self.word):
            for name, r in zip(h.pos_vars, ranks):
                vars_[name] = r
            vars_[h.out_var] = out
            vars_[h.idx_var] = idx
            yield idx

    def alloc(self, d: ir.MemDecl) -> None:
        size = int(self.ev(d.size))
        if size < 0:
            raise CapacityError(f"{d.name} declared with negative size {size}")
        if d.kind is MemoryKind.REGISTER:
            m: Any = Register(d.name, d.zero)
        elif d.kind.is_queue:
            m = Fifo(d.name, size, d.depth, d.kind)
        elif d.kind.off_chip:
            raise ExecutionError(f"{d.name}: DRAM cannot be allocated on the accelerator")
        else:
            m = Sram(d.name, size, d.zero, d.kind)
        if d.name in self.resident:
            data = self.resident[d.name]
            if isinstance(m, Register):
                m.value = data[0]
            elif isinstance(m, Sram):
                if len(data) > size:
                    raise CapacityError(f"{d.name} holds {size} cells, resident data has {len(data)}")
                m.cells.update(enumerate(data))
        self.st.onchip[d.name] = m

    def push(self, name: str, value) -> None:
        f = self.onchip(name, Fifo)
        f.push(value)
        self.stats.fifo_enqueues += 1
        self.stats.fifo_traffic.setdefault(name, [0, 0])[0] += 1

    def pop(self, name: str):
        f = self.onchip(name, Fifo)
        v = f.pop()
        self.stats.fifo_dequeues += 1
        self.stats.fifo_traffic.setdefault(name, [0, 0])[1] += 1
        return v

    def load(self, n: ir.Load) -> None:
        src = self.st.dram[n.src]
        start, end = int(self.ev(n.start)), int(self.ev(n.end))
        src._check(start, end)
        data = src.data[start:end]
        if any(v is None for v in data):
            raise UninitializedRead(f"{n.src}[{start}:{end}] loaded before it was written")
        dst = self.st.onchip.get(n.dst)
        if isinstance(dst, Fifo):
            for v in data:
                self.push(n.dst, v)
        elif isinstance(dst, Register):
            if len(data) != 1:
                raise CapacityError(f"register {n.dst} loaded with {len(data)} words")
            dst.value = data[0]
        elif isinstance(dst, Sram):
            if len(data) > dst.size:
                raise CapacityError(f"{n.dst} holds {dst.size} cells, load brings {len(data)}")
            dst.cells.update(enumerate(data))
        else:
            raise ExecutionError(f"load into unallocated memory {n.dst}")
        self.stats.dram_words_loaded += len(data)
        self.stats.dram_loads.setdefault(n.src, []).append(len(data))

    def store(self, n: ir.Store) -> None:
        dst = self.st.dram[n.dst]
        start, end = int(self.ev(n.start)), int(self.ev(n.end))
        dst._check(start, end)
        src = self.memory(n.src)
        if isinstance(src, Register):
            values = [src.read()]
        else:
            values = [src.read(k) for k in range(end - start)]
        if len(values) != end - start:
            raise CapacityError(f"store of {n.src} into {n.dst}[{start}:{end}]")
        dst.data[start:end] = values
        self.stats.dram_words_stored += len(values)

    def stream_store(self, n: ir.StreamStore) -> None:
        dst = self.st.dram[n.dst]
        base, length = int(self.ev(n.base)), int(self.ev(n.length))
        dst._check(base, base + length)
        for k in range(length):
            dst.data[base + k] = self.pop(n.fifo)
        self.stats.dram_words_stored += length


# -- host side -----------------------------------------------------------------------

def _format_of(io: ir.TensorIO) -> TensorFormat:
    return TensorFormat(tuple(COMPRESSED if l == "C" else LevelFormat.UNCOMPRESSED
                              for l in io.levels), tuple(io.mode_order))


def _arrays(t: PackedTensor) -> dict[tuple[str, int | None], list]:
    out: dict[tuple[str, int | None], list] = {}
    for lv in t.pos:
        out[("pos", lv)] = t.pos[lv].tolist()
        out[("crd", lv)] = t.crd[lv].tolist()
    out[("vals", None)] = t.vals.tolist()
    return out


def _bind(io: ir.TensorIO, t: PackedTensor, syms: dict) -> dict[tuple[str, int | None], list]:
    fmt = _format_of(io)
    if tuple(l.short for l in t.format.levels) != io.levels or \
            tuple(t.format.mode_order) != tuple(io.mode_order):
        raise ValueError(f"{io.name} is stored as {t.format}, the kernel expects {fmt}")
    try:
        t.validate()
    except ValueError as exc:
        raise InvariantViolation(f"input {io.name}: {exc}") from None
    for sym, extent in zip(io.dims, t.shape):
        syms[sym] = int(extent)
    return _arrays(t)


def execute(p: PatternProgram, inputs: Mapping[str, PackedTensor],
            env: Mapping[str, int] | None = None, strict: bool = True
            ) -> tuple[dict[str, PackedTensor], RunStats]:
    """Run ``p`` on packed ``inputs``; return the packed outputs and workload counters.

    ``env`` overrides configuration symbols such as ``bitvector_word``.
    With ``strict`` every FIFO must be drained by the end of its scope.
    """
    syms: dict[str, int] = dict(p.env)
    for k, v in (env or {}).items():
        if int(v) <= 0:
            raise ValueError(f"{k} must be positive, got {v}")
        syms[k] = int(v)
    drams: dict[str, Dram] = {}
    dtypes = []
    for io in p.inputs:
        if io.name not in inputs:
            raise ValueError(f"missing input tensor {io.name}")
        t = inputs[io.name]
        dtypes.append(t.vals.dtype)
        arrays = _bind(io, t, syms)
        for kind, lv, name in io.arrays:
            data = arrays[(kind, lv)]
            drams[name] = Dram(name, data)
            syms[f"{name[:-len('_dram')]}_len"] = len(data)
    resident: dict[str, list] = {}
    for io in p.resident:
        if io.name not in inputs:
            raise ValueError(f"missing on-chip tensor {io.name}")
        t = inputs[io.name]
        dtypes.append(t.vals.dtype)
        arrays = _bind(io, t, syms)
        for kind, lv, name in io.arrays:
            resident[name] = arrays[(kind, lv)]
    for sym, canon in p.dim_aliases:
        if canon in syms:
            syms.setdefault(sym, syms[canon])
    for d in p.drams:
        if d.name in drams:
            continue
        size = _static_eval(d.size, syms)
        drams[d.name] = Dram(d.name, [0 if d.zero else None] * size)
    state = MachineState(drams, {}, {}, {}, syms)
    m = _Machine(p, state, resident, strict)
    m.run(p.body)
    if strict:
        for name, (enq, deq) in m.stats.fifo_traffic.items():
            if enq != deq:
                raise FifoDisciplineError(f"FIFO {name}: {enq} enqueues but {deq} dequeues")
    dtype = np.result_type(*dtypes) if dtypes else np.float64
    outputs = {io.name: _read_back(io, drams, syms, dtype) for io in p.outputs}
    return outputs, m.stats


def _static_eval(e: ir.ValueExpr, syms: Mapping[str, int]) -> int:
    if isinstance(e, ir.Const):
        return int(e.value)
    if isinstance(e, ir.Sym):
        if e.name not in syms:
            raise ExecutionError(f"unbound size symbol {e.name}")
        return int(syms[e.name])
    if isinstance(e, ir.BinOp):
        return int(_BINOPS[e.op](_static_eval(e.a, syms), _static_eval(e.b, syms)))
    raise ExecutionError(f"DRAM size {e!r} is not static")


def _read_back(io: ir.TensorIO, drams: Mapping[str, Dram], syms, dtype) -> PackedTensor:
    fmt = _format_of(io)
    shape = tuple(int(syms[d]) for d in io.dims)

    def take(name: str, n: int) -> list:
        data = drams[name].data
        if n > len(data):
            raise InvariantViolation(f"{io.name}: {name} needs {n} words, has {len(data)}")
        out = data[:n]
        if any(v is None for v in out):
            raise InvariantViolation(f"{io.name}: {name} has cells that were never written")
        return out

    pos, crd = {}, {}
    parents = 1
    for lv, kind in enumerate(fmt.levels):
        if kind is not COMPRESSED:
            parents *= shape[fmt.mode_order[lv]]
            continue
        p = take(io.array("pos", lv), parents + 1)
        if p[0] != 0 or any(b < a for a, b in zip(p, p[1:])):
            raise InvariantViolation(f"{io.name}: level {lv + 1} pos array is not a prefix sum")
        pos[lv] = np.asarray(p, dtype=np.int64)
        crd[lv] = np.asarray(take(io.array("crd", lv), p[-1]), dtype=np.int64)
        parents = p[-1]
    vals = np.asarray(take(io.array("vals"), parents), dtype=dtype)
    t = PackedTensor(shape, fmt, pos, crd, vals)
    try:
        t.validate()
    except ValueError as exc:
        raise InvariantViolation(f"output {io.name}: {exc}") from None
    return t


# -- verification --------------------------------------------------------------------

@dataclasses.dataclass
class VerifyReport:
    kernel: str
    passed: bool
    max_error: float
    stats: RunStats | None
    message: str = ""
    dataset: str = ""

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "dataset": self.dataset, "passed": self.passed,
                "max_error": self.max_error, "message": self.message,
                "stats": self.stats.summary() if self.stats else None}


def compare(result: np.ndarray, expected: np.ndarray, rtol: float = 1e-6) -> tuple[bool, float]:
    """Exact comparison for integer data, relative ``rtol`` otherwise."""
    result = np.asarray(result)
    expected = np.asarray(expected)
    if result.shape != expected.shape:
        return False, float("inf")
    if result.size == 0:
        return True, 0.0
    if np.issubdtype(result.dtype, np.integer) and np.issubdtype(expected.dtype, np.integer):
        err = float(np.max(np.abs(result.astype(np.int64) - expected.astype(np.int64))))
        return err == 0, err
    diff = np.abs(result.astype(np.float64) - expected.astype(np.float64))
    scale = np.maximum(np.abs(expected.astype(np.float64)), 1.0)
    err = float(np.max(diff / scale))
    return err <= rtol, err


def verify(kernel, datasets=None, env: Mapping[str, int] | None = None, **config
           ) -> VerifyReport:
    """Compile ``kernel`` (registry name or spec), run it, compare with the dense oracle.

    ``datasets`` maps tensor names to dense arrays or packed tensors; when
    omitted, synthetic inputs are drawn from ``config`` (density, dims,
    seed, dtype).
    """
    from .kernels import verify_kernel
    return verify_kernel(kernel, datasets, env, **config)
