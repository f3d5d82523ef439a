import numpy as np
import pytest

from spatialtac import kernels
from spatialtac.interpreter import (ExecutionError, FifoOverflow, FifoUnderflow,
                                    InvariantViolation, UninitializedRead, compare, execute,
                                    verify)
from spatialtac.kernels import compile_kernel, pack_inputs, synthetic_inputs
from spatialtac.lowering import ir
from spatialtac.lowering.ir import Alloc, Const, MemDecl, MemoryKind, PatternProgram
from spatialtac.tensor import pack, unpack

from helpers import VECADD, driver

K = MemoryKind


def sddmm_example():
    return {"B": np.eye(2, dtype=np.int64), "C": np.array([[1, 2], [3, 4]]),
            "D": np.array([[5, 6], [7, 8]])}


def test_sddmm_two_by_two():
    c = compile_kernel("sddmm")
    out, stats = execute(c.program, pack_inputs(c.spec, sddmm_example()))
    assert unpack(out["A"]).tolist() == [[19, 0], [0, 50]]
    assert stats.dram_loads["B2_pos_dram"] == [3]
    assert stats.pattern_iterations["Reduce(k)"] == 4


def test_compressed_vector_add():
    spec = driver(VECADD)
    c = compile_kernel(spec)
    fmt = spec.tensor_vars()["b"].format
    ins = {"b": pack([((0,), 1.0), ((2,), 2.0)], (4,), fmt),
           "c": pack([((1,), 3.0), ((2,), 4.0)], (4,), fmt)}
    out, stats = execute(c.program, ins)
    a = out["a"]
    assert a.crd[0].tolist() == [0, 1, 2]
    assert a.vals.tolist() == [1.0, 3.0, 6.0]
    assert stats.fifo_enqueues == stats.fifo_dequeues


@pytest.mark.parametrize("name", kernels.KERNEL_NAMES)
def test_zero_inputs(name):
    spec = kernels.resolve(name)
    data = {k: np.zeros_like(v) for k, v in synthetic_inputs(spec, "6", 0.0, 0, np.int64).items()}
    c = compile_kernel(spec)
    out, stats = execute(c.program, pack_inputs(spec, data))
    result = unpack(out[spec.assignment().lhs.tensor.name])
    assert not np.any(result)
    assert stats.atomic_updates == 0


def test_verify_spmv_and_plus3():
    r = verify("spmv", None, None, dims="64x64", density=0.02, seed=1)
    assert r.passed, r.message
    r = verify("plus3", None, None, dims="100x100", density=0.1, seed=2)
    assert r.passed, r.message
    assert r.to_dict()["stats"]["fifo_enqueues"] == r.stats.fifo_dequeues


def test_corrupted_pos_is_reported():
    spec = kernels.resolve("spmv")
    data = synthetic_inputs(spec, "16", 0.3, 0)
    packed = pack_inputs(spec, data)
    packed["A"].pos[1][3] = packed["A"].pos[1][2] - 1
    r = verify("spmv", packed, None)
    assert not r.passed and "invariant violation" in r.message
    with pytest.raises(InvariantViolation):
        execute(compile_kernel("spmv").program, packed)


def test_determinism():
    c = compile_kernel("plus2")
    data = pack_inputs(c.spec, synthetic_inputs(c.spec, "10", 0.2, 4))
    o1, s1 = execute(c.program, data)
    o2, s2 = execute(c.program, data)
    assert o1["A"].equals(o2["A"])
    assert s1.to_json() == s2.to_json()


def test_word_size_changes_scan_work():
    c = compile_kernel("plus2")
    data = pack_inputs(c.spec, synthetic_inputs(c.spec, "64", 0.1, 0))
    _, s16 = execute(c.program, data, {"bitvector_word": 16})
    _, s32 = execute(c.program, data, {"bitvector_word": 32})
    assert s16.scan_invocations == s32.scan_invocations
    assert s16.scan_words_processed == 2 * s32.scan_words_processed


def test_iterated_and_native_plus3_differ_in_work():
    a = verify("plus3", None, None, dims="32", density=0.1, seed=0)
    b = verify("plus3_native", None, None, dims="32", density=0.1, seed=0)
    assert a.passed and b.passed
    assert a.stats.summary() != b.stats.summary()


def test_stats_json_round_trip():
    import json
    c = compile_kernel("spmv")
    _, s = execute(c.program, pack_inputs(c.spec, synthetic_inputs(c.spec, "8", 0.5, 0)))
    data = json.loads(s.to_json())
    assert data["fifo_enqueues"] == s.fifo_enqueues
    assert all(v >= 0 for v in s.summary().values())


# -- hand-built programs --------------------------------------------------------------

def program(*body):
    return PatternProgram("t", (), tuple(body), (), ())


def test_fifo_underflow():
    p = program(Alloc(MemDecl("q", K.FIFO, Const(4), 4)), ir.Dequeue("x", "q"))
    with pytest.raises(FifoUnderflow):
        execute(p, {})


def test_fifo_overflow():
    p = program(Alloc(MemDecl("q", K.FIFO, Const(1), 1)), ir.Enqueue("q", Const(1)),
                ir.Enqueue("q", Const(2)))
    with pytest.raises(FifoOverflow):
        execute(p, {})


def test_undrained_fifo_is_an_error_in_strict_mode():
    p = program(Alloc(MemDecl("q", K.FIFO, Const(2), 2)), ir.Enqueue("q", Const(1)))
    with pytest.raises(ExecutionError):
        execute(p, {})


def test_uninitialized_reads():
    p = program(Alloc(MemDecl("s", K.DENSE_SRAM, Const(4))), ir.Let("x", ir.Read("s", Const(1))))
    with pytest.raises(UninitializedRead):
        execute(p, {})
    p = program(Alloc(MemDecl("r", K.REGISTER)), ir.Let("x", ir.Read("r")))
    with pytest.raises(UninitializedRead):
        execute(p, {})


def test_scan_extent_mismatch():
    p = program(Alloc(MemDecl("s", K.DENSE_SRAM, Const(1), zero=True)),
                ir.GenBitVector("bv", "s", Const(0), Const(1), Const(64)),
                ir.Foreach(ir.Scan(None, ("bv",), Const(32), ("p",), "o", "i"), ()))
    with pytest.raises(ExecutionError, match="extent"):
        execute(p, {})


def test_compare_modes():
    assert compare(np.array([1, 2]), np.array([1, 2]))[0]
    assert not compare(np.array([1, 2]), np.array([1, 3]))[0]
    assert compare(np.array([1.0]), np.array([1.0 + 1e-9]))[0]
    assert not compare(np.array([1.0]), np.array([1.1]))[0]
    assert not compare(np.zeros(2), np.zeros(3))[0]
