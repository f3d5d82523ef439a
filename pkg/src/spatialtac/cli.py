"""Command line: ``spatialtac list|compile|verify|bench``.

Exit codes: 0 success, 1 verification failure or pipeline error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import codegen, kernels
from .cin.printer import format_stmt
from .io import ParseError, read_frostt, read_matrix_market
from .lowering import dump_json
from .oracle import dense_eval
from .tensor import COMPRESSED

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_DTYPES = {"float": np.float64, "float64": np.float64, "float32": np.float32,
           "int": np.int64, "int64": np.int64, "int32": np.int32}


class UsageError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    """Environment bindings and dataset settings for one invocation."""

    env: dict[str, int] = dataclasses.field(default_factory=dict)
    seed: int = 0
    density: float | None = None
    dims: list[int] | None = None
    dtype: type = np.float64

    def __post_init__(self):
        for k, v in self.env.items():
            if v <= 0:
                raise UsageError(f"{k} must be positive, got {v}")
        if self.density is not None and not 0 <= self.density <= 1:
            raise UsageError(f"density must lie in [0, 1], got {self.density}")
        if self.dims is not None and any(d <= 0 for d in self.dims):
            raise UsageError("dims must be positive")


def _env_pair(text: str) -> tuple[str, int]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} needs an integer value") from None


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    env = dict(getattr(ns, "env", None) or [])
    if getattr(ns, "word_size", None) is not None:
        env["bitvector_word"] = ns.word_size
    for flag, key in (("inner_par", "innerPar"), ("outer_par", "outerPar")):
        if getattr(ns, flag, None) is not None:
            env[key] = getattr(ns, flag)
    dims = None
    if getattr(ns, "dims", None):
        try:
            dims = kernels.parse_dims(ns.dims)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return RunConfig(env, getattr(ns, "seed", 0), getattr(ns, "density", None), dims,
                     _DTYPES[getattr(ns, "dtype", "float")])


def _spec(name: str) -> kernels.KernelSpec:
    """A registered kernel name, or a path to a ``.tac`` driver file."""
    if name.endswith(".tac"):
        path = Path(name)
        try:
            text = path.read_text()
        except OSError as exc:
            raise UsageError(f"cannot read {name}: {exc}") from None
        return kernels.parse_driver(text, path.stem)
    try:
        return kernels.resolve(name)
    except kernels.UnknownKernel:
        raise UsageError(f"unknown kernel {name!r}; try 'list'") from None


def _split_env(env: Mapping[str, int]) -> dict[str, int]:
    return {k: v for k, v in env.items() if k not in kernels.RUNTIME_ENV}


# -- list ----------------------------------------------------------------------------

def cmd_list(ns, out) -> int:
    for spec in kernels.registry():
        print(f"{spec.name:14s} {spec.expression}", file=out)
    return EXIT_OK


# -- compile -------------------------------------------------------------------------

def cmd_compile(ns, out) -> int:
    spec = _spec(ns.kernel)
    cfg = config_from_args(ns)
    c = kernels.compile_kernel(spec, _split_env(cfg.env))
    if c.diagnostics:
        for d in c.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_FAIL
    outdir = Path(ns.out)
    outdir.mkdir(parents=True, exist_ok=True)
    elem = "Int" if np.issubdtype(cfg.dtype, np.integer) else "Float"
    text = codegen.emit(c.program, codegen.EmitConfig(element=elem))
    target = outdir / f"{spec.name}.spatial.txt"
    target.write_text(text)
    print(f"wrote {target}", file=out)
    if ns.dump_cin:
        trace = "\n\n".join(f"-- {label}\n{format_stmt(s)}" for label, s in c.trace) + "\n"
        (outdir / f"{spec.name}.cin.txt").write_text(trace)
        print(trace, file=out, end="")
    if ns.dump_memory_plan:
        path = outdir / f"{spec.name}.plan.json"
        path.write_text(c.plan.dump_json() + "\n")
        print(f"wrote {path}", file=out)
    if ns.dump_ir:
        path = outdir / f"{spec.name}.ir.json"
        path.write_text(dump_json(c.program) + "\n")
        print(f"wrote {path}", file=out)
    return EXIT_OK


# -- datasets ------------------------------------------------------------------------

def _file_dataset(spec: kernels.KernelSpec, path: str, reader: str,
                  cfg: RunConfig) -> dict[str, np.ndarray]:
    """Bind a coordinate file to the first sparse input of matching order."""
    try:
        with open(path) as f:
            entries, shape = read_matrix_market(f) if reader == "mm" else read_frostt(f)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    a = spec.assignment()
    from .expr import accesses
    target = None
    for acc in accesses(a.rhs):
        fmt = acc.tensor.format
        if len(acc.indices) == len(shape) and COMPRESSED in fmt.levels:
            target = acc
            break
    if target is None:
        raise UsageError(f"{spec.name} has no sparse input of order {len(shape)}")
    default = cfg.dims or kernels.parse_dims(spec.run.get("dims", "16"))
    ext = kernels.var_extents(spec, default)
    for v, n in zip(target.indices, shape):
        ext[v.name] = n
    dims = [ext[v.name] for v in spec.index_vars]
    data = kernels.synthetic_inputs(spec, dims, cfg.density, cfg.seed, cfg.dtype)
    arr = np.zeros(shape, dtype=cfg.dtype)
    for coord, value in entries:
        arr[coord] = value
    data[target.tensor.name] = arr
    return data


def _dataset(spec, ns, cfg) -> dict[str, np.ndarray] | None:
    if getattr(ns, "mm", None):
        return _file_dataset(spec, ns.mm, "mm", cfg)
    if getattr(ns, "tns", None):
        return _file_dataset(spec, ns.tns, "tns", cfg)
    return None


# -- verify --------------------------------------------------------------------------

def _stats_table(summary: Mapping[str, int]) -> str:
    width = max(len(k) for k in summary)
    return "\n".join(f"  {k:<{width}}  {v}" for k, v in summary.items())


def cmd_verify(ns, out) -> int:
    spec = _spec(ns.kernel)
    cfg = config_from_args(ns)
    try:
        data = _dataset(spec, ns, cfg)
    except ParseError as exc:
        print(f"error: dataset: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if ns.host:
        if data is None:
            data = kernels.synthetic_inputs(spec, cfg.dims, cfg.density, cfg.seed, cfg.dtype)
        result = dense_eval(spec.assignment(), data)
        print(f"{spec.name}: host reference computed, shape {np.shape(result)}", file=out)
        return EXIT_OK
    report = kernels.verify_kernel(spec, data, cfg.env, dims=cfg.dims, density=cfg.density,
                                   seed=cfg.seed, dtype=cfg.dtype)
    status = "PASS" if report.passed else "FAIL"
    print(f"{spec.name}: {status} max_error={report.max_error:g} {report.dataset}", file=out)
    if report.message:
        print(f"  {report.message}", file=out)
    if report.stats is not None:
        print(_stats_table(report.stats.summary()), file=out)
        if ns.stats:
            print(report.stats.to_json(), file=out)
    return EXIT_OK if report.passed else EXIT_FAIL


# -- bench ---------------------------------------------------------------------------

BENCH_FIELDS = ("kernel", "dataset", "passed", "max_error", "dram_words_loaded",
                "dram_words_stored", "scan_invocations", "scan_words_processed",
                "pattern_iterations", "fifo_enqueues", "fifo_dequeues", "atomic_updates")


def bench_rows(names: Sequence[str], cfg: RunConfig) -> list[dict]:
    rows = []
    for name in names:
        spec = _spec(name)
        r = kernels.verify_kernel(spec, None, cfg.env, dims=cfg.dims, density=cfg.density,
                                  seed=cfg.seed, dtype=cfg.dtype)
        row = {"kernel": spec.name, "dataset": r.dataset, "passed": r.passed,
               "max_error": r.max_error}
        row.update(r.stats.summary() if r.stats else {})
        rows.append(row)
    return rows


def cmd_bench(ns, out) -> int:
    cfg = config_from_args(ns)
    names = ns.kernels or list(kernels.KERNEL_NAMES)
    rows = bench_rows(names, cfg)
    w = csv.DictWriter(out, fieldnames=BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAIL


# -- argument parsing ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", action="append", type=_env_pair, metavar="NAME=VALUE",
                   help="environment binding such as innerPar=16")
    p.add_argument("--inner-par", type=int)
    p.add_argument("--outer-par", type=int)
    p.add_argument("--word-size", type=int, help="bit-vector word width")
    p.add_argument("--dtype", choices=sorted(_DTYPES), default="float")


def _data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--density", type=float)
    p.add_argument("--dims", help="extents such as 800x800 (the last one repeats)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spatialtac", description="Sparse tensor algebra to Spatial-style patterns.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("list", help="list registered kernels")

    c = sub.add_parser("compile", help="emit <kernel>.spatial.txt")
    c.add_argument("kernel")
    c.add_argument("--out", default=".", help="output directory")
    c.add_argument("--dump-ir", action="store_true")
    c.add_argument("--dump-memory-plan", action="store_true")
    c.add_argument("--dump-cin", action="store_true")
    _common(c)

    v = sub.add_parser("verify", help="run a kernel on the interpreter against the oracle")
    v.add_argument("kernel")
    v.add_argument("--mm", help="MatrixMarket file for the sparse matrix input")
    v.add_argument("--tns", help="FROSTT file for the sparse tensor input")
    v.add_argument("--stats", action="store_true", help="print full run statistics as JSON")
    v.add_argument("--host", action="store_true",
                   help="only evaluate the dense host reference")
    _common(v)
    _data(v)

    b = sub.add_parser("bench", help="CSV of run statistics")
    b.add_argument("kernels", nargs="*")
    _common(b)
    _data(b)
    return p


_COMMANDS = {"list": cmd_list, "compile": cmd_compile, "verify": cmd_verify,
             "bench": cmd_bench}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        ns = build_parser().parse_args(argv)
        if ns.command is None:
            raise UsageError("missing subcommand (list, compile, verify, bench)")
        return _COMMANDS[ns.command](ns, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (kernels.DriverError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL



def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
