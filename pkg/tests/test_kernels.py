import numpy as np
import pytest

from spatialtac import kernels
from spatialtac.kernels import (DriverError, UnknownKernel, compile_kernel, load_kernel,
                                parse_dims, parse_driver, parse_format, var_extents)
from spatialtac.tensor import COMPRESSED, ON_CHIP, UNCOMPRESSED


def statements(name):
    return kernels.load_kernel(name).statements


def test_registry_has_ten_kernels():
    names = [s.name for s in kernels.registry()]
    assert names == list(kernels.KERNEL_NAMES) and len(names) == 10


def test_spmv_driver_is_short():
    assert statements("spmv") <= 12


@pytest.mark.parametrize("name", kernels.KERNEL_NAMES + kernels.EXTRA_KERNELS)
def test_registry_compiles_clean(name):
    assert compile_kernel(name).diagnostics == []


def test_unknown_kernel():
    with pytest.raises(UnknownKernel):
        load_kernel("nope")


def test_parse_format():
    f = parse_format("CSC")
    assert f.levels == (UNCOMPRESSED, COMPRESSED) and f.mode_order == (1, 0)
    assert parse_format("UC (1,0) onChip").region is ON_CHIP
    assert parse_format("scalar").order == 0
    with pytest.raises(DriverError):
        parse_format("XYZ")


def test_driver_errors_have_lines():
    with pytest.raises(DriverError) as err:
        compile_kernel(parse_driver("format A: CSR\ny(i) = A(i,j) * x(j)\nprecompute(nothing)\n"))
    assert err.value.line == 3
    with pytest.raises(DriverError) as err:
        parse_driver("format A: CSR\ny(i) = A(i,j) * x(j)\n\nunroll(i, 4)\n")
    assert err.value.line == 4
    with pytest.raises(DriverError):
        parse_driver("format A: CSR\n")


def test_trace_lists_each_step():
    labels = [label for label, _ in load_kernel("sddmm").schedule_trace()]
    assert labels[0] == "to_cin"
    assert labels[1:] == [c.text for c in load_kernel("sddmm").schedule]


def test_schedule_env_overrides():
    from spatialtac.cin.stmt import env_bindings
    s = load_kernel("sddmm").scheduled({"innerPar": 4})
    assert env_bindings(s)["innerPar"] == 4


def test_dims_helpers():
    assert parse_dims("8x4") == [8, 4]
    with pytest.raises(ValueError):
        parse_dims("8xq")
    with pytest.raises(ValueError):
        parse_dims("0")
    assert var_extents(load_kernel("ttv"), [5]) == {"i": 5, "j": 5, "k": 5}


def test_synthetic_inputs_reproducible():
    a = kernels.synthetic_inputs("sddmm", "10", 0.3, 7)
    b = kernels.synthetic_inputs("sddmm", "10", 0.3, 7)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert np.count_nonzero(a["B"]) == 30
    assert np.count_nonzero(a["C"]) == a["C"].size
