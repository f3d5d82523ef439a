import collections
import re

import pytest

from spatialtac import codegen, kernels
from spatialtac.codegen import (EmitConfig, EmitError, bindings_from_text, emit, expect,
                                sddmm_expectations, structural_check)
from spatialtac.kernels import compile_kernel
from spatialtac.lowering import ir
from spatialtac.memory import MemoryKind

ALL = kernels.KERNEL_NAMES + kernels.EXTRA_KERNELS


@pytest.fixture(scope="module")
def sddmm_text():
    return emit(compile_kernel("sddmm").program)


def test_sddmm_key_lines(sddmm_text):
    assert "B2_pos load B2_pos_dram(0::(B1_dim + 1) par ip)" in sddmm_text
    m = re.search(r"Reduce\((\w+)\)\(D1_dim by 1 par ip\) \{ k =>\n(.*)\n\s*\} \{ _ \+ _ \}",
                  sddmm_text)
    assert m and "*" in m.group(2)
    assert "Foreach (C1_dim by 1 par bp) { i =>" in sddmm_text
    assert "A_vals_dram stream_store_vec(jB_start, A_vals, jB_len)" in sddmm_text


def test_sddmm_reference_structure(sddmm_text):
    report = structural_check(sddmm_text, sddmm_expectations())
    assert report.passed, "\n".join(report.lines())
    assert len(report.results) == 15


def test_structural_negative_has_location(sddmm_text):
    text = sddmm_text.replace("val A2_pos = SRAM[T]", "val A2_pos = FIFO[T]")
    report = structural_check(text, [expect("memory", "A2_pos", kind=MemoryKind.DENSE_SRAM)])
    assert not report.passed
    r = report.results[0]
    assert r.line is not None and "FIFO" in r.detail
    assert text.splitlines()[r.line - 1].strip().startswith("val A2_pos = FIFO")


def test_structural_scope_negative(sddmm_text):
    report = structural_check(sddmm_text, [expect("load", "B2_crd", "top")])
    assert not report.passed and "in i" in report.results[0].detail


def test_empty_expectations_pass(sddmm_text):
    assert structural_check(sddmm_text, []).passed


def test_empty_program():
    text = emit(codegen.empty_program())
    lines = text.rstrip("\n").splitlines()
    assert lines[-2:] == ["Accel {", "}"]
    assert lines[0] == "// Spatial header code"


@pytest.mark.parametrize("name", ALL)
def test_deterministic_and_each_transfer_once(name):
    p = compile_kernel(name).program
    text = emit(p)
    assert text == emit(compile_kernel(name).program)
    lines = collections.Counter(line.strip() for line in text.splitlines())
    for n in ir.nodes(p.body):
        if isinstance(n, ir.Alloc):
            hits = [ln for ln in lines if ln.startswith(f"val {n.mem.name} = ")]
            assert len(hits) == 1 and lines[hits[0]] == 1, n.mem.name
    loads = [n for n in ir.nodes(p.body) if isinstance(n, (ir.Load, ir.Store, ir.StreamStore))]
    emitted = [ln for ln in text.splitlines()
               if " load " in ln or " store " in ln or "stream_store_vec" in ln]
    assert len(emitted) == len(loads)


@pytest.mark.parametrize("name", ALL)
def test_declarations_recover_bindings(name):
    c = compile_kernel(name)
    onchip, dram = bindings_from_text(emit(c.program))
    for a, kind in c.plan.bindings.onchip.items():
        entry = c.plan.entries[a.name]
        if entry.alloc_site is not None:
            assert onchip[a.name] is kind, a.name
    for a, kind in c.plan.bindings.dram.items():
        if a.name in {d.name[:-5] for d in c.program.drams}:
            assert dram[a.name] is kind, a.name


def test_type_and_indent_config():
    p = compile_kernel("spmv").program
    text = emit(p, EmitConfig(type_name="E", element="Float", indent=4))
    assert "type E = Float" in text
    assert "\n    val" in text and "SRAM[E]" in text


def test_undeclared_memory_is_rejected():
    p = ir.PatternProgram("bad", (), (ir.Load("x", "x_dram", ir.ZERO, ir.ONE),), (), ())
    with pytest.raises(EmitError):
        emit(p)
