"""Acceptance criteria, one test each; a summary line per criterion is printed at the end.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import itertools
import math
import random
import time
import warnings

import numpy as np

from spatialtac import cin, codegen, kernels
from spatialtac.cin import alpha_equal, parse_stmt
from spatialtac.expr import accesses, tensor
from spatialtac.interpreter import execute
from spatialtac.lowering import contraction as ct
from spatialtac.lowering import lower_iter, pack_bitvector
from spatialtac.lowering.bitvector import intersect_sorted, scan, union_sorted
from spatialtac.memory import check_plan
from spatialtac.notation import parse_expression, to_cin
from spatialtac.oracle import dense_eval
from spatialtac.tensor import ON_CHIP, dense_format, scalar_format

RESULTS: dict[int, tuple[bool, str]] = {}

TENSOR_KERNELS = {"ttv", "ttm", "mttkrp", "innerprod", "plus2"}
DENSITIES = (0.01, 0.1, 0.5)
SEEDS = range(5)


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    assert ok, detail


# 1 ----------------------------------------------------------------------------------

def test_criterion_1_end_to_end():
    start = time.perf_counter()
    failures, runs = [], 0
    for name in kernels.KERNEL_NAMES:
        compiled = kernels.compile_kernel(name)
        dims = "12" if name in TENSOR_KERNELS else "48"
        for density, seed, dtype in itertools.product(DENSITIES, SEEDS, (np.int64, np.float64)):
            r = kernels.verify_kernel(name, dims=dims, density=density, seed=seed, dtype=dtype,
                                      compiled=compiled, rtol=1e-6)
            runs += 1
            if not r.passed:
                failures.append(f"{name} {r.dataset} {np.dtype(dtype).name}: {r.message}")
            else:
                for fifo, (enq, deq) in r.stats.fifo_traffic.items():
                    if enq != deq:
                        failures.append(f"{name}: FIFO {fifo} enq {enq} != deq {deq}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 300
    detail = f"{runs} runs, {len(failures)} failures, {elapsed:.1f}s"
    if failures:
        detail += "; first: " + failures[0]
    record(1, ok, detail)


# 2 ----------------------------------------------------------------------------------

def test_criterion_2_sddmm_structure():
    text = codegen.emit(kernels.compile_kernel("sddmm").program)
    report = codegen.structural_check(text, codegen.sddmm_expectations())
    failed = [line for line in report.lines() if line.startswith("FAIL")]
    record(2, report.passed, f"{len(report.results)} expectations, {len(failed)} failed"
           + (f"; {failed[0]}" if failed else ""))


# 3 ----------------------------------------------------------------------------------

SPMV = parse_expression("y(i) = A(i,j) * x(j)")
SDDMM = parse_expression("A(i,j) = B(i,j) * C(i,k) * D(k,j)")
EW = parse_expression("a(i) = b(i) * c(i)")
TTV = parse_expression("A(i,j) = B(i,j,k) * c(k)")


def _on(name, order):
    return tensor(name, dense_format(order, ON_CHIP))


def _inputs(a, rng):
    ext = {v.name: int(rng.integers(1, 8)) for v in a.index_vars}
    integer = bool(rng.integers(0, 2))
    out = {}
    for acc in accesses(a.rhs):
        shape = tuple(ext[v.name] for v in acc.indices)
        out[acc.tensor.name] = (rng.integers(-4, 5, shape) if integer else rng.random(shape))
    return out


def _same(x, y):
    if x.dtype.kind in "iu" and y.dtype.kind in "iu":
        return np.array_equal(x, y)
    return np.allclose(x, y, rtol=1e-9, atol=0)


def _commands():
    ws = tensor("ws", scalar_format(ON_CHIP))

    def prec(a, rng):
        return cin.precompute(to_cin(a), a.rhs, [], [], ws)

    def split(a, rng):
        v = str(rng.choice([x.name for x in a.index_vars]))
        fn = cin.split_up if rng.integers(0, 2) else cin.split_down
        return fn(to_cin(a), v, v + "o", v + "i", int(rng.integers(1, 6)))

    def fuse(a, rng):
        return cin.fuse(cin.split_up(to_cin(a), "i", "io", "ii", int(rng.integers(1, 5))),
                        "io", "ii", "f")

    def reorder(a, rng):
        return cin.reorder(to_cin(a), list(rng.permutation([v.name for v in a.index_vars])))

    def accelerate(a, rng):
        p = cin.precompute(to_cin(a), a.rhs, [], [], ws)
        last = a.index_vars[-1].name
        target = parse_stmt(f"forall({last}, ws += {cin.printer.format_expr(a.rhs)})",
                            a.tensors() | {"ws": ws})
        return cin.accelerate(p, target, "Spatial", "Reduction", "innerPar")

    def environment(a, rng):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = cin.environment(to_cin(a), "innerPar", int(rng.integers(1, 32)))
            return cin.environment(s, "innerPar", int(rng.integers(1, 32)))

    mats = (SPMV, SDDMM, TTV)
    return {"precompute": (prec, mats + (EW,)), "split": (split, mats + (EW,)),
            "fuse": (fuse, mats), "reorder": (reorder, mats + (EW,)),
            "accelerate": (accelerate, mats), "environment": (environment, mats + (EW,))}


def _golden() -> list[str]:
    bad = []
    a_on = _on("a_on", 1)
    got = cin.precompute(to_cin(EW), EW.rhs, ["i"], ["i"], a_on)
    want = parse_stmt("(forall(i, a(i) = a_on(i)) where forall(i, a_on(i) = b(i) * c(i)))")
    if not alpha_equal(got, want):
        bad.append("precompute")
    if not alpha_equal(cin.inline_where(got), to_cin(EW)):
        bad.append("inline")
    got = cin.reorder(to_cin(SPMV), ["j", "i"])
    if not alpha_equal(got, parse_stmt("forall(j, forall(i, y(i) += A(i,j) * x(j)))")):
        bad.append("reorder")
    got = cin.fuse(to_cin(SPMV), "i", "j", "f")
    if cin.format_stmt(got) != "(forall(f, y(i) += A(i,j) * x(j)) s.t. fuse(i, j, f))":
        bad.append("fuse")
    got = cin.split_up(to_cin(SPMV), "i", "io", "ii", 4)
    if "split_up(i, io, ii, 4)" not in cin.format_stmt(got):
        bad.append("split")
    return bad


def test_criterion_3_scheduling_algebra():
    problems = [f"golden {g}" for g in _golden()]
    rng = np.random.default_rng(2024)
    instances = 0
    for name, (cmd, exprs) in _commands().items():
        for n in range(100):
            a = exprs[n % len(exprs)]
            ins = _inputs(a, rng)
            out = a.lhs.tensor.name
            before = cin.interpret_cin(to_cin(a), ins)[out]
            after = cin.interpret_cin(cmd(a, rng), ins)[out]
            instances += 1
            if not (_same(before, after) and _same(after, dense_eval(a, ins).astype(after.dtype))):
                problems.append(f"{name} instance {n}")
    record(3, not problems, f"{instances} random instances over {len(_commands())} commands, "
           f"{len(problems)} problems" + (f"; {problems[0]}" if problems else ""))


# 4 ----------------------------------------------------------------------------------

RULE_FAMILIES = (
    "single: U → dense foreach", "single: C → position iteration",
    "single: B → result bit vector + scan", "single: C as result → gen BV",
    "universe: U ∪ _ → U", "universe: _ ∪ U → U", "universe: U ∩ U → U",
    "compressed-universe: C ∩ U → C", "compressed-universe: U ∩ C → C",
    "co-iteration: C ∘ C → gen BV, gen BV", "co-iteration: C ∘ B → gen BV",
    "co-iteration: B ∘ C → gen BV", "co-iteration: B ∘ B → AND scan",
    "co-iteration: B ∘ B → OR scan", "co-iteration: B ∘ B → AND bit vector",
    "co-iteration: B ∘ B → OR bit vector",
    "base: collapse prefix",
)


def _random_contraction(rng: random.Random, leaves: int):
    fmts = list(ct.IterFormat)
    if leaves == 1:
        return ct.Leaf(rng.choice("abcdefgh"), rng.choice(fmts), rng.random() < 0.2)
    k = rng.randint(1, leaves - 1)
    op = rng.choice(list(ct.Op))
    return ct.Node(op, _random_contraction(rng, k), _random_contraction(rng, leaves - k))


def test_criterion_4_rewrite_rules():
    import pathlib
    tests = (pathlib.Path(__file__).parent / "test_contraction.py").read_text()
    untested = [r for r in RULE_FAMILIES if f'"{r}"' not in tests]
    rng = random.Random(7)
    seen, worst = set(), 0.0
    for _ in range(2000):
        c = _random_contraction(rng, rng.randint(1, 8))
        r = lower_iter(c)
        seen.update(r.rules)
        worst = max(worst, r.depth / len(ct.leaves(c)))
    unseen = [r for r in RULE_FAMILIES if r not in seen]
    ok = not untested and not unseen and worst <= 4
    record(4, ok, f"{len(RULE_FAMILIES)} rules, untested {untested or 'none'}, "
           f"unfired {unseen or 'none'}, max depth/leaves {worst:.2f} (bound 4)")


# 5 ----------------------------------------------------------------------------------

def test_criterion_5_scanners():
    rng = random.Random(5)
    bad = 0
    for _ in range(1000):
        extent = rng.randint(1, 1024)
        u = sorted(rng.sample(range(extent), rng.randint(0, min(extent, 96))))
        v = sorted(rng.sample(range(extent), rng.randint(0, min(extent, 96))))
        bu, bv = pack_bitvector(u, extent), pack_bitvector(v, extent)
        ok = [i for _, _, i in scan([bu, bv], "AND", 32)] == intersect_sorted(u, v)
        ok &= [i for _, _, i in scan([bu, bv], "OR", 32)] == union_sorted(u, v)
        ok &= [i for _, _, i in scan([bu], None, 32)] == u
        bad += not ok
    record(5, bad == 0, f"1000 random pairs, {bad} mismatches against two-pointer merge")


# 6 ----------------------------------------------------------------------------------

def test_criterion_6_memory_plans():
    problems = []
    for name in kernels.KERNEL_NAMES:
        c = kernels.compile_kernel(name)
        diags = check_plan(c.stmt, c.plan)
        problems += [f"{name}: {d}" for d in diags]
        dims = "12" if name in TENSOR_KERNELS else "48"
        data = kernels.pack_inputs(c.spec, kernels.synthetic_inputs(c.spec, dims, 0.1, 0))
        # strict execution raises on any read before allocation and transfer
        _, stats = execute(c.program, data, strict=True)
        for fifo, (enq, deq) in stats.fifo_traffic.items():
            if enq != deq:
                problems.append(f"{name}: FIFO {fifo} enq {enq} deq {deq}")
    record(6, not problems, f"{len(kernels.KERNEL_NAMES)} kernels, {len(problems)} problems"
           + (f"; {problems[0]}" if problems else ""))


# 7 ----------------------------------------------------------------------------------

VECADD = "format a: C\nformat b: C\nformat c: C\na(i) = b(i) + c(i)\n"


def test_criterion_7_dual_scan_work():
    spec = kernels.parse_driver(VECADD, "vecadd")
    c = kernels.compile_kernel(spec)
    extent, details, ok = 1024, [], True
    for word in (32, 16):
        per = []
        for density in (0.01, 0.5):
            data = kernels.synthetic_inputs(spec, str(extent), density, 3)
            _, stats = execute(c.program, kernels.pack_inputs(spec, data),
                               {"bitvector_word": word})
            segments = stats.scan_invocations
            expected = segments * 2 * math.ceil(extent / word)
            ok &= stats.scan_words_processed == expected
            per.append(stats.scan_words_processed // max(segments, 1))
        ok &= per[0] == per[1] == 2 * math.ceil(extent / word)
        details.append(f"word {word}: {per[0]} words/scan at 1%, {per[1]} at 50%")
    record(7, ok, "; ".join(details))


# 8 ----------------------------------------------------------------------------------

def test_criterion_8_spmv_driver():
    n = kernels.load_kernel("spmv").statements
    record(8, n <= 12, f"SpMV driver has {n} statements (limit 12)")


def summary_lines() -> list[str]:
    out = []
    for n in range(1, 9):
        if n in RESULTS:
            ok, detail = RESULTS[n]
            out.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        else:
            out.append(f"criterion {n}: FAIL - did not complete")
    return out


if __name__ == "__main__":  # pragma: no cover
    import sys
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    for t in tests:
        try:
            t()
        except AssertionError:
            pass
    print("\n".join(summary_lines()))
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) and len(RESULTS) == 8 else 1)
