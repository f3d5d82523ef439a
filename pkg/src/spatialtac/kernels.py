"""Kernel driver files, the benchmark registry, and the compile/verify pipeline.

A driver is a short text file with one statement per line::

    format A: CSR
    format ws: scalar onChip
    y(i) = A(i,j) * x(j)
    environment(innerPar, 16)
    precompute(A(i,j) * x(j), {}, {}, ws)
    accelerate(forall(j, ws += A(i,j) * x(j)), Spatial, Reduction, innerPar)
    run(dims=800x800, density=0.01)

``#`` starts a comment. Format specs are a level string (``UC``) or one of
``dense``, ``CSR``, ``CSC``, ``DCSR``, ``CSF``, ``scalar``, optionally
followed by a mode order ``(1,0)`` and ``onChip``. Tensors without a format
line are dense and off-chip. ``order(j, i)`` sets the loop order.
"""

from __future__ import annotations

import dataclasses
import re
import warnings
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from . import cin
from .cin.printer import parse_stmt
from .cin.stmt import Stmt
from .expr import IndexVar, TensorVar
from .memory import MemoryPlan, check_plan, plan_memory
from .notation import Assignment, parse_expression, to_cin
from .oracle import dense_eval
from .syntax import NotationError, Parser
from .tensor import (COMPRESSED, ON_CHIP, UNCOMPRESSED, PackedTensor, TensorFormat,
                     pack_dense, random_entries, unpack)


class DriverError(ValueError):
    """A driver file that cannot be parsed or applied."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class UnknownKernel(KeyError):
    pass


_NAMED_FORMATS = {
    "dense": None, "csr": "UC", "csc": ("UC", (1, 0)), "dcsr": "CC", "csf": None,
    "scalar": "",
}


def parse_format(spec: str, order: int | None = None) -> TensorFormat:
    """Parse ``"CSR"``, ``"UCC (0,2,1) onChip"`` and the like."""
    text = spec.strip()
    region_on = False
    if re.search(r"\bon[-_ ]?chip\b", text, re.I):
        region_on = True
        text = re.sub(r"\bon[-_ ]?chip\b", "", text, flags=re.I)
    text = re.sub(r"\boff[-_ ]?chip\b", "", text, flags=re.I).strip()
    m = re.fullmatch(r"(\w*)\s*(?:\(([\d,\s]*)\))?", text)
    if not m:
        raise DriverError(f"bad format {spec!r}")
    name, perm = m.group(1), m.group(2)
    key = name.lower()
    mode_order = None
    if key in ("dense", "csf"):
        if order is None:
            raise DriverError(f"format {name} needs the tensor's order")
        levels = ("U" if key == "dense" else "C") * order
    elif key in _NAMED_FORMATS:
        named = _NAMED_FORMATS[key]
        levels, mode_order = named if isinstance(named, tuple) else (named, None)
    elif re.fullmatch(r"[UC]*", name):
        levels = name
    else:
        raise DriverError(f"unknown format {name!r}")
    if perm is not None and perm.strip():
        mode_order = tuple(int(x) for x in perm.split(","))
    lv = tuple(UNCOMPRESSED if c == "U" else COMPRESSED for c in levels)
    try:
        fmt = TensorFormat(lv, mode_order)
    except ValueError as exc:
        raise DriverError(str(exc)) from None
    return fmt.with_region(ON_CHIP) if region_on else fmt


def split_args(text: str) -> list[str]:
    """Split at top-level commas (ignoring those inside (), {} and [])."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        out.append("".join(cur).strip())
    return out


def _var_list(text: str) -> list[str]:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise DriverError(f"expected a variable list in braces, got {text!r}")
    return [v.strip() for v in text[1:-1].split(",") if v.strip()]


def _int_or_name(text: str) -> int | str:
    text = text.strip()
    return int(text) if re.fullmatch(r"-?\d+", text) else text


@dataclasses.dataclass
class Command:
    name: str
    args: list[str]
    text: str
    line: int


@dataclasses.dataclass
class KernelSpec:
    """A kernel: expression, formats, schedule and default dataset."""

    name: str
    expression: str
    formats: dict[str, str]
    schedule: list[Command]
    loop_order: list[str] | None = None
    run: dict[str, str] = dataclasses.field(default_factory=dict)
    description: str = ""
    statements: int = 0
    source: str = ""

    # -- tensors -------------------------------------------------------------------

    def _orders(self) -> dict[str, int]:
        p = parse_expression(self.expression.replace("+=", "="))
        out = {p.lhs.tensor.name: p.lhs.tensor.order}
        from .expr import accesses
        for acc in accesses(p.rhs):
            out[acc.tensor.name] = acc.tensor.order
        return out

    def tensor_vars(self) -> dict[str, TensorVar]:
        orders = self._orders()
        out: dict[str, TensorVar] = {}
        for name, spec in self.formats.items():
            out[name] = TensorVar(name, parse_format(spec, orders.get(name)))
        for name, order in orders.items():
            if name not in out:
                out[name] = TensorVar(name, parse_format("dense", order))
        return out

    def assignment(self) -> Assignment:
        try:
            return parse_expression(self.expression, self.tensor_vars())
        except NotationError as exc:
            raise DriverError(f"{self.name}: {exc}") from None

    @property
    def index_vars(self) -> list[IndexVar]:
        return list(self.assignment().index_vars)

    # -- scheduling ------------------------------------------------------------------

    def schedule_trace(self, env: Mapping[str, int] | None = None,
                       extra: Sequence[Command] = ()) -> list[tuple[str, Stmt]]:
        """Concrete index notation after each scheduling command."""
        a = self.assignment()
        s = to_cin(a, self.loop_order)
        trace = [("to_cin", s)]
        tensors = self.tensor_vars()
        for cmd in list(self.schedule) + list(extra):
            try:
                s = apply_command(s, cmd, tensors)
            except (cin.ScheduleError, NotationError, ValueError, KeyError) as exc:
                raise DriverError(f"{cmd.name}: {exc}", cmd.line) from None
            trace.append((cmd.text, s))
        for k, v in (env or {}).items():
            if k in _SCHEDULE_ENV:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")  # caller overrides are deliberate
                    s = cin.environment(s, k, int(v))
                trace.append((f"environment({k}, {v})", s))
        return trace

    def scheduled(self, env: Mapping[str, int] | None = None) -> Stmt:
        return self.schedule_trace(env)[-1][1]


_SCHEDULE_ENV = ("innerPar", "outerPar", "nnz_accel_max", "fifo_depth")
RUNTIME_ENV = ("bitvector_word",)


COMMANDS = ("precompute", "accelerate", "map", "environment", "split_up", "split_down", "fuse",
            "reorder", "inline")


def apply_command(s: Stmt, cmd: Command, tensors: dict[str, TensorVar]) -> Stmt:
    a = cmd.args
    name = cmd.name
    need = {"precompute": 4, "accelerate": 4, "map": 4, "environment": 2, "split_up": 4,
            "split_down": 4, "fuse": 3}
    if name in need and len(a) != need[name] and not (name in ("accelerate", "map")
                                                        and len(a) == 3):
        raise DriverError(f"{name} takes {need[name]} arguments, got {len(a)}", cmd.line)
    if name == "precompute":
        expr = Parser(a[0], tensors)
        e = expr.expr()
        if a[3] not in tensors:
            raise DriverError(f"precompute target {a[3]} has no format line", cmd.line)
        return cin.precompute(s, e, _var_list(a[1]), _var_list(a[2]), tensors[a[3]])
    if name in ("accelerate", "map"):
        known = dict(tensors)
        target = parse_stmt(a[0], known)
        const = _int_or_name(a[3]) if len(a) == 4 else None
        fn = cin.accelerate if name == "accelerate" else cin.map_stmt
        return fn(s, target, a[1], a[2], const)
    if name == "environment":
        return cin.environment(s, a[0], int(a[1]))
    if name in ("split_up", "split_down"):
        fn = cin.split_up if name == "split_up" else cin.split_down
        return fn(s, a[0], a[1], a[2], int(a[3]))
    if name == "fuse":
        return cin.fuse(s, a[0], a[1], a[2])
    if name == "reorder":
        return cin.reorder(s, a)
    if name == "inline":
        return cin.inline_where(s)
    raise DriverError(f"unknown scheduling command {name!r}", cmd.line)


_CALL = re.compile(r"^(\w+)\s*\((.*)\)\s*$", re.S)
_FORMAT = re.compile(r"^format\s+(\w+)\s*:\s*(.+)$")
_ASSIGN = re.compile(r"^\w+\s*(\([^()]*\))?\s*\+?=")


def parse_driver(text: str, name: str = "kernel") -> KernelSpec:
    """Parse a driver file into a :class:`KernelSpec`."""
    formats: dict[str, str] = {}
    schedule: list[Command] = []
    expression = None
    loop_order = None
    run: dict[str, str] = {}
    description = ""
    count = 0
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if raw.strip().startswith("#") and not description:
                description = raw.strip().lstrip("#").strip()
            continue
        count += 1
        m = _FORMAT.match(line)
        if m:
            formats[m.group(1)] = m.group(2).strip()
            continue
        m = _CALL.match(line)
        if m and not _ASSIGN.match(line):
            head, body = m.group(1), m.group(2)
            args = split_args(body)
            if head == "order":
                loop_order = args
            elif head == "run":
                for arg in args:
                    if "=" not in arg:
                        raise DriverError(f"run arguments are key=value, got {arg!r}", no)
                    k, v = arg.split("=", 1)
                    run[k.strip()] = v.strip()
            elif head in COMMANDS:
                schedule.append(Command(head, args, line, no))
            else:
                raise DriverError(f"unknown scheduling command {head!r}", no)
            continue
        if "=" in line:
            if expression is not None:
                raise DriverError("a driver holds exactly one expression", no)
            expression = line
            continue
        raise DriverError(f"cannot parse {line!r}", no)
    if expression is None:
        raise DriverError("driver has no expression")
    return KernelSpec(name, expression, formats, schedule, loop_order, run, description, count,
                      text)


# -- registry ------------------------------------------------------------------------

KERNEL_NAMES = ("spmv", "plus3", "sddmm", "mattransmul", "residual", "ttv", "ttm", "mttkrp",
                "innerprod", "plus2")
EXTRA_KERNELS = ("plus3_native",)

_CACHE: dict[str, KernelSpec] = {}


def load_kernel(name: str) -> KernelSpec:
    key = name.lower()
    if key in _CACHE:
        return _CACHE[key]
    if key not in KERNEL_NAMES and key not in EXTRA_KERNELS:
        raise UnknownKernel(f"unknown kernel {name!r}")
    text = resources.files("spatialtac").joinpath("drivers", f"{key}.tac").read_text()
    spec = parse_driver(text, key)
    _CACHE[key] = spec
    return spec


def registry() -> list[KernelSpec]:
    """The ten benchmark kernels, in table order."""
    return [load_kernel(n) for n in KERNEL_NAMES]


def resolve(kernel: str | KernelSpec) -> KernelSpec:
    return kernel if isinstance(kernel, KernelSpec) else load_kernel(kernel)


# -- pipeline -------------------------------------------------------------------------

@dataclasses.dataclass
class Compiled:
    spec: KernelSpec
    stmt: Stmt
    plan: MemoryPlan
    program: Any
    diagnostics: list[str]
    trace: list[tuple[str, Stmt]]


def compile_kernel(kernel: str | KernelSpec, env: Mapping[str, int] | None = None) -> Compiled:
    """Schedule, plan memories and lower a kernel."""
    from .lowering import lower
    spec = resolve(kernel)
    trace = spec.schedule_trace(env)
    s = trace[-1][1]
    plan = plan_memory(s)
    diags = check_plan(s, plan)
    program = lower(s, plan, spec.name)
    return Compiled(spec, s, plan, program, diags + list(program.diagnostics), trace)


def parse_dims(text: str | Sequence[int]) -> list[int]:
    if isinstance(text, str):
        try:
            dims = [int(x) for x in text.lower().split("x")]
        except ValueError:
            raise ValueError(f"dims must look like 800x800, got {text!r}") from None
    else:
        dims = [int(x) for x in text]
    if not dims or any(d <= 0 for d in dims):
        raise ValueError(f"dims must be positive, got {text!r}")
    return dims


def var_extents(spec: KernelSpec, dims: Sequence[int]) -> dict[str, int]:
    """Extents per index variable; the last given extent repeats."""
    out = {}
    for n, v in enumerate(spec.index_vars):
        out[v.name] = dims[min(n, len(dims) - 1)]
    return out


def synthetic_inputs(kernel: str | KernelSpec, dims: Sequence[int] | str | None = None,
                     density: float | None = None, seed: int = 0, dtype=np.float64
                     ) -> dict[str, np.ndarray]:
    """Seeded random dense inputs: sparse formats at ``density``, dense ones full."""
    spec = resolve(kernel)
    if dims is None:
        dims = spec.run.get("dims", "16")
    if density is None:
        density = float(spec.run.get("density", "0.1"))
    if not 0 <= density <= 1:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    ext = var_extents(spec, parse_dims(dims))
    a = spec.assignment()
    rng = np.random.default_rng(seed)
    out: dict[str, np.ndarray] = {}
    from .expr import accesses
    for acc in accesses(a.rhs):
        t = acc.tensor
        if t.name in out:
            continue
        shape = tuple(ext[v.name] for v in acc.indices)
        dens = 1.0 if all(lv is UNCOMPRESSED for lv in t.format.levels) else density
        entries = random_entries(shape, dens, rng, dtype)
        arr = np.zeros(shape, dtype=dtype)
        for c, v in entries:
            arr[c] = v
        out[t.name] = arr
    return out


def pack_inputs(spec: KernelSpec, arrays: Mapping[str, Any]) -> dict[str, PackedTensor]:
    tensors = spec.tensor_vars()
    out = {}
    for name, arr in arrays.items():
        if isinstance(arr, PackedTensor):
            out[name] = arr
        else:
            out[name] = pack_dense(np.asarray(arr), tensors[name].format)
    return out


def verify_kernel(kernel: str | KernelSpec, datasets: Mapping[str, Any] | None = None,
                  env: Mapping[str, int] | None = None, *, dims=None, density=None,
                  seed: int = 0, dtype=np.float64, compiled: Compiled | None = None,
                  rtol: float = 1e-6):
    """Compile, execute and compare one kernel against the dense oracle."""
    from .interpreter import InvariantViolation, VerifyReport, compare, execute
    spec = resolve(kernel)
    env = dict(env or {})
    runtime = {k: v for k, v in env.items() if k in RUNTIME_ENV}
    c = compiled or compile_kernel(spec, {k: v for k, v in env.items() if k not in RUNTIME_ENV})
    label = "given" if datasets is not None else f"seed={seed} density={density} dims={dims}"
    if datasets is None:
        datasets = synthetic_inputs(spec, dims, density, seed, dtype)
    packed = pack_inputs(spec, datasets)
    try:
        outputs, stats = execute(c.program, packed, runtime)
    except InvariantViolation as exc:
        return VerifyReport(spec.name, False, float("inf"), None,
                            f"invariant violation: {exc}", label)
    dense_in = {k: (unpack(v) if isinstance(v, PackedTensor) else np.asarray(v))
                for k, v in datasets.items()}
    a = spec.assignment()
    expected = dense_eval(a, dense_in)
    got = unpack(outputs[a.lhs.tensor.name])
    ok, err = compare(got, expected, rtol)
    msg = "" if ok else f"max error {err:g} exceeds tolerance"
    if c.diagnostics:
        ok = False
        msg = "; ".join(c.diagnostics)
    return VerifyReport(spec.name, ok, err, stats, msg, label)
