"""Shared builders for tests."""

from spatialtac import kernels

VECADD = """
format a: C
format b: C
format c: C
a(i) = b(i) + c(i)
"""

DENSE_ADD = """
format A: dense
format B: dense
format C: dense
A(i,j) = B(i,j) + C(i,j)
"""


def driver(text: str, name: str = "custom") -> kernels.KernelSpec:
    return kernels.parse_driver(text, name)
