import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatialtac import cin
from spatialtac.cin import (EnvBinding, MappedCall, ScheduleError, accelerate, alpha_equal,
                            environment, format_stmt, fuse, inline_where, interpret_cin,
                            map_stmt, parse_stmt, precompute, reorder, split_down, split_up)
from spatialtac.cin.backend import BackendFunc, register
from spatialtac.expr import tensor
from spatialtac.notation import parse_expression, to_cin
from spatialtac.oracle import dense_eval
from spatialtac.tensor import ON_CHIP, dense_format, scalar_format

MANY = settings(max_examples=100, deadline=None)

SPMV = parse_expression("y(i) = A(i,j) * x(j)")
SDDMM = parse_expression("A(i,j) = B(i,j) * C(i,k) * D(k,j)")
EW = parse_expression("a(i) = b(i) * c(i)")
TTV = parse_expression("A(i,j) = B(i,j,k) * c(k)")
CASES = {"spmv": SPMV, "sddmm": SDDMM, "ew": EW, "ttv": TTV}

if not any(f.name == "f_mul" for f in cin.backend.registered()):
    register(BackendFunc("f_mul", "test", 2, None))


def on(name, order):
    return tensor(name, dense_format(order, ON_CHIP))


def inputs_for(a, extents, rng, integer=True):
    out = {}
    for acc in __import__("spatialtac.expr", fromlist=["accesses"]).accesses(a.rhs):
        shape = tuple(extents[v.name] for v in acc.indices)
        if integer:
            out[acc.tensor.name] = rng.integers(-4, 5, size=shape).astype(np.int64)
        else:
            out[acc.tensor.name] = rng.random(shape)
    return out


def same(a, b):
    return a.dtype.kind in "iu" and np.array_equal(a, b) or np.allclose(a, b, rtol=1e-9, atol=0)


@st.composite
def instance(draw, cases=tuple(CASES)):
    key = draw(st.sampled_from(cases))
    a = CASES[key]
    extents = {v.name: draw(st.integers(1, 7)) for v in a.index_vars}
    rng = np.random.default_rng(draw(st.integers(0, 2**31)))
    return key, a, inputs_for(a, extents, rng, draw(st.booleans()))


def check(a, before, after, inputs):
    name = a.lhs.tensor.name
    x = interpret_cin(before, inputs)[name]
    y = interpret_cin(after, inputs)[name]
    assert same(x, y)
    assert same(y, dense_eval(a, inputs).astype(y.dtype))


# -- golden rewrites ------------------------------------------------------------------

def test_precompute_elementwise():
    s = precompute(to_cin(EW), EW.rhs, ["i"], ["i"], on("a_on", 1))
    want = parse_stmt("(forall(i, a(i) = a_on(i)) where forall(i, a_on(i) = b(i) * c(i)))")
    assert alpha_equal(s, want)


def test_precompute_scalar_workspace():
    ws = tensor("ws", scalar_format())
    s = precompute(to_cin(SDDMM), SDDMM.rhs, [], [], ws)
    want = parse_stmt("forall(i, forall(j, (A(i,j) = ws where "
                      "forall(k, ws += B(i,j) * C(i,k) * D(k,j)))))")
    assert alpha_equal(s, want)


def test_precompute_absent_expression():
    C = SPMV.tensors()["x"]
    with pytest.raises(ScheduleError, match="not found"):
        precompute(to_cin(SPMV), C["i"], [], [], tensor("ws", scalar_format()))


def test_precompute_count_mismatch():
    with pytest.raises(ScheduleError):
        precompute(to_cin(EW), EW.rhs, ["i"], [], on("a_on", 1))


def test_precompute_then_inline_recovers_original():
    s = to_cin(EW)
    p = precompute(s, EW.rhs, ["i"], ["i"], on("a_on", 1))
    assert alpha_equal(inline_where(p), s)
    ws = tensor("ws", scalar_format())
    s = to_cin(SDDMM)
    assert alpha_equal(inline_where(precompute(s, SDDMM.rhs, [], [], ws)), s)


def test_split_golden():
    s = split_up(to_cin(SPMV), "i", "io", "ii", 4)
    assert format_stmt(s) == ("(forall(io, forall(ii, forall(j, y(i) += A(i,j) * x(j)))) "
                              "s.t. split_up(i, io, ii, 4))")
    d = split_down(to_cin(SPMV), "i", "io", "ii", 4)
    assert "split_down(i, io, ii, 4)" in format_stmt(d)


def test_split_unknown_var():
    with pytest.raises(ScheduleError):
        split_up(to_cin(SPMV), "q", "qo", "qi", 2)
    with pytest.raises(ScheduleError):
        split_up(to_cin(SPMV), "i", "io", "ii", 0)


def test_fuse_golden_and_errors():
    s = fuse(to_cin(SPMV), "i", "j", "f")
    assert format_stmt(s) == "(forall(f, y(i) += A(i,j) * x(j)) s.t. fuse(i, j, f))"
    with pytest.raises(ScheduleError):
        fuse(to_cin(SDDMM), "i", "k", "f")


def test_reorder_golden():
    s = reorder(to_cin(SPMV), ["j", "i"])
    assert format_stmt(s) == "forall(j, forall(i, y(i) += A(i,j) * x(j)))"
    assert reorder(to_cin(SPMV), ["i", "j"]) == to_cin(SPMV)
    with pytest.raises(ScheduleError):
        reorder(to_cin(SPMV), ["j", "k"])


def test_reorder_cannot_cross_where():
    ws = tensor("ws", scalar_format())
    s = precompute(to_cin(SPMV), SPMV.rhs, [], [], ws)
    with pytest.raises(ScheduleError):
        reorder(s, ["j", "i"])


def test_map_elementwise():
    a_on, b_on, c_on = on("a_on", 1), on("b_on", 1), on("c_on", 1)
    s = parse_stmt("forall(i, a_on(i) = b_on(i) * c_on(i))",
                   {"a_on": a_on, "b_on": b_on, "c_on": c_on})
    m = map_stmt(s, s, "test", "f_mul")
    body = m.body if isinstance(m, cin.SuchThat) else m
    assert isinstance(body, MappedCall)
    assert [t.name for t in body.tensors] == ["a_on", "b_on", "c_on"]
    assert "map(test, f_mul)" in format_stmt(m)


def test_map_rejects_off_chip_and_unknown():
    s = to_cin(EW)
    with pytest.raises(ScheduleError, match="on-chip|off-chip"):
        map_stmt(s, s, "test", "f_mul")
    with pytest.raises((ScheduleError, KeyError)):
        map_stmt(s, s, "test", "nope")


def test_accelerate_elementwise_form():
    s = to_cin(EW)
    acc = accelerate(s, s, "test", "f_mul")
    text = format_stmt(acc)
    assert "map(test, f_mul)" in text
    assert "a_on" in text and "b_on" in text and "c_on" in text
    calls = [n for _, n in cin.stmt.walk(acc) if isinstance(n, MappedCall)]
    assert len(calls) == 1


def test_accelerate_sddmm_reduction():
    ws = tensor("ws", scalar_format(ON_CHIP))
    s = precompute(to_cin(SDDMM), SDDMM.rhs, [], [], ws)
    target = parse_stmt("forall(k, ws += B(i,j) * C(i,k) * D(k,j))", SDDMM.tensors() | {"ws": ws})
    acc = accelerate(environment(s, "innerPar", 16), target, "Spatial", "Reduction", "innerPar")
    calls = [n for _, n in cin.stmt.walk(acc) if isinstance(n, MappedCall)]
    assert len(calls) == 1 and calls[0].func == "Reduction" and calls[0].const == "innerPar"
    assert all(t.on_chip for t in calls[0].tensors)


def test_accelerate_all_on_chip_is_single_map():
    a_on, b_on, c_on = on("a_on", 1), on("b_on", 1), on("c_on", 1)
    s = parse_stmt("forall(i, a_on(i) = b_on(i) * c_on(i))",
                   {"a_on": a_on, "b_on": b_on, "c_on": c_on})
    assert alpha_equal(accelerate(s, s, "test", "f_mul"), map_stmt(s, s, "test", "f_mul"))


def test_environment():
    s = environment(to_cin(SDDMM), "innerPar", 16)
    assert EnvBinding("innerPar", 16) in s.relations
    s = environment(s, "outerPar", 2)
    assert format_stmt(s).endswith("s.t. innerPar = 16, outerPar = 2)")
    with pytest.warns(UserWarning):
        s2 = environment(s, "innerPar", 8)
    assert EnvBinding("innerPar", 8) in s2.relations
    with pytest.raises(ScheduleError):
        environment(s, "innerPar", 0)


def test_interpret_sddmm_example():
    out = interpret_cin(to_cin(SDDMM), {"B": np.eye(2, dtype=int),
                                        "C": np.array([[1, 2], [3, 4]]),
                                        "D": np.array([[5, 6], [7, 8]])})
    assert out["A"].tolist() == [[19, 0], [0, 50]]


def test_interpret_partial_loads_schedule():
    # rows of C and columns of D staged on-chip per (i, j)
    C_on, D_on = on("C_on", 1), on("D_on", 1)
    s = to_cin(SDDMM)
    s = precompute(s, SDDMM.tensors()["C"]["i", "k"], ["k"], ["k"], C_on)
    s = precompute(s, SDDMM.tensors()["D"]["k", "j"], ["k"], ["k"], D_on)
    rng = np.random.default_rng(3)
    ins = {"B": rng.integers(0, 3, (4, 5)), "C": rng.integers(0, 3, (4, 3)),
           "D": rng.integers(0, 3, (3, 5))}
    assert np.array_equal(interpret_cin(s, ins)["A"], dense_eval(SDDMM, ins))


def test_interpret_zero_inputs():
    z = {"B": np.zeros((3, 3)), "C": np.zeros((3, 2)), "D": np.zeros((2, 3))}
    assert not interpret_cin(to_cin(SDDMM), z)["A"].any()


def test_interpret_errors():
    with pytest.raises(cin.InterpretError):
        interpret_cin(to_cin(SPMV), {"A": np.ones((2, 2))})
    call = map_stmt(*(2 * [parse_stmt("forall(i, a_on(i) = b_on(i))",
                                       {"a_on": on("a_on", 1), "b_on": on("b_on", 1)})]),
                    "test", "f_mul")
    cin.backend._REGISTRY.pop(("test", "f_mul"))
    try:
        with pytest.raises((cin.InterpretError, KeyError)):
            interpret_cin(call, {"b_on": np.ones(2)})
    finally:
        register(BackendFunc("f_mul", "test", 2, None))


def test_print_parse_fixed_point():
    ws = tensor("ws", scalar_format())
    s = split_up(precompute(to_cin(SDDMM), SDDMM.rhs, [], [], ws), "i", "io", "ii", 2)
    text = format_stmt(s)
    assert format_stmt(parse_stmt(text, SDDMM.tensors() | {"ws": ws})) == text


# -- semantics preservation (100 random instances per command) ------------------------

@MANY
@given(instance())
def test_semantics_precompute(case):
    key, a, ins = case
    s = to_cin(a)
    ws = tensor("ws", scalar_format())
    check(a, s, precompute(s, a.rhs, [], [], ws), ins)


@MANY
@given(instance(), st.integers(1, 5), st.booleans(), st.data())
def test_semantics_split(case, c, up, data):
    key, a, ins = case
    s = to_cin(a)
    var = data.draw(st.sampled_from([v.name for v in a.index_vars]))
    op = split_up if up else split_down
    check(a, s, op(s, var, var + "o", var + "i", c), ins)


@MANY
@given(instance(("spmv", "sddmm", "ttv")), st.integers(1, 4))
def test_semantics_fuse(case, c):
    key, a, ins = case
    s = to_cin(a)
    check(a, s, fuse(s, "i", "j", "f"), ins)
    sp = split_up(s, "i", "io", "ii", c)
    check(a, s, fuse(sp, "io", "ii", "f"), ins)


@MANY
@given(instance(), st.data())
def test_semantics_reorder(case, data):
    key, a, ins = case
    s = to_cin(a)
    perm = data.draw(st.permutations([v.name for v in a.index_vars]))
    check(a, s, reorder(s, perm), ins)


@MANY
@given(instance(("spmv", "sddmm", "ttv")))
def test_semantics_accelerate(case):
    key, a, ins = case
    s = to_cin(a)
    ws = tensor("ws", scalar_format(ON_CHIP))
    p = precompute(s, a.rhs, [], [], ws)
    last = a.index_vars[-1].name
    target = parse_stmt(f"forall({last}, ws += {cin.printer.format_expr(a.rhs)})",
                        a.tensors() | {"ws": ws})
    check(a, s, accelerate(p, target, "Spatial", "Reduction", "innerPar"), ins)


@MANY
@given(instance(("ew",)))
def test_semantics_map(case):
    key, a, ins = case
    s = to_cin(a)
    check(a, s, accelerate(s, s, "test", "f_mul"), ins)


@MANY
@given(instance(), st.integers(1, 64))
def test_semantics_environment(case, c):
    key, a, ins = case
    s = to_cin(a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check(a, s, environment(environment(s, "innerPar", c), "innerPar", c + 1), ins)
