import dataclasses
import json

import pytest

from spatialtac import kernels
from spatialtac.kernels import compile_kernel, parse_format
from spatialtac.lowering import analyze
from spatialtac.memory import (MemoryKind, _tensor, bind_memories, check_plan,
                               place_allocations_and_transfers, plan_memory)
from spatialtac.notation import parse_expression, to_cin

K = MemoryKind
ALL = kernels.KERNEL_NAMES + kernels.EXTRA_KERNELS


@pytest.fixture(scope="module")
def sddmm():
    return compile_kernel("sddmm")


def test_sddmm_bindings(sddmm):
    assert sddmm.plan.bindings.names() == {
        "B2_pos": "DenseSRAM", "B2_crd": "FIFO", "B_vals": "FIFO", "C_vals": "DenseSRAM",
        "D_vals": "DenseSRAM", "ws": "Register", "A2_crd": "FIFO", "A_vals": "FIFO",
        "A2_pos": "DenseSRAM"}


def test_sddmm_sites(sddmm):
    plan = sddmm.plan.to_json()
    assert plan["B2_pos"]["alloc_site"] == "top"
    assert {u["site"] for u in plan["B2_pos"]["uses"]} == {"i"}
    for name in ("B2_crd", "B_vals"):
        assert plan[name]["alloc_site"] == "i"
        assert plan[name]["transfer"] == "load"
        assert plan[name]["depth"] == 16
    assert plan["A_vals"]["transfer"] == "stream-store"
    assert plan["A_vals"]["alloc_site"] == "i"


def test_vector_add_uses_bit_vector_streams():
    v = parse_format("C", 1)
    a = parse_expression("a(i) = b(i) + c(i)", {"a": v, "b": v, "c": v})
    names = bind_memories(to_cin(a)).names()
    assert names["b1_crd"] == names["c1_crd"] == "BitVectorStream"


def test_dense_add_is_dense_sram():
    d = parse_format("dense", 2)
    a = parse_expression("A(i,j) = B(i,j) + C(i,j)", {"A": d, "B": d, "C": d})
    names = bind_memories(to_cin(a)).names()
    assert set(names.values()) == {"DenseSRAM"}


def test_fifo_accessed_too_deep_is_diagnosed():
    a = parse_expression("A(i,j) = B(i,j) * C(i,k) * D(k,j)", {"B": parse_format("CSR")})
    an = analyze(to_cin(a))
    b = bind_memories(an)
    assert check_plan(an, place_allocations_and_transfers(an, b)) == []
    bad = place_allocations_and_transfers(an, b.override("B_vals", K.FIFO))
    diags = check_plan(an, bad)
    assert len(diags) == 1 and diags[0].startswith("FIFO discipline: B_vals")
    assert "i/j/k" in diags[0]


def test_missing_load_is_diagnosed(sddmm):
    plan = plan_memory(sddmm.stmt)
    plan.entries["C_vals"] = dataclasses.replace(plan.entries["C_vals"], transfer=None)
    assert check_plan(sddmm.stmt, plan) == [
        "transfer-before-read: C_vals is read but never loaded from DRAM"]


def test_position_queue_is_diagnosed(sddmm):
    an = sddmm.plan.analysis
    bad = place_allocations_and_transfers(an, sddmm.plan.bindings.override("B2_pos", K.FIFO))
    assert any("position array" in d for d in check_plan(an, bad))


@pytest.mark.parametrize("name", ALL)
def test_registry_plans_are_clean(name):
    c = compile_kernel(name)
    assert check_plan(c.stmt, c.plan) == []
    for entry in c.plan.entries.values():
        if entry.array.kind == "pos":
            assert entry.kind is None or not entry.kind.is_queue
    an = c.plan.analysis
    for e in c.plan.entries.values():
        t = _tensor(an, e.array.tensor)
        assert (e.dram is None) == t.on_chip
        if e.dram is not None:
            assert e.dram in (K.DENSE_DRAM, K.SPARSE_DRAM)


@pytest.mark.parametrize("name", ["sddmm", "spmv", "plus2"])
def test_plan_json_is_stable(name):
    a = compile_kernel(name).plan.dump_json()
    b = compile_kernel(name).plan.dump_json()
    assert a == b
    data = json.loads(a)
    assert all({"kind", "alloc_site", "uses"} <= set(v) for v in data.values())
