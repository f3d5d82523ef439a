"""Dense reference evaluation of index-notation assignments.

Used as the correctness oracle for every other execution path, so it is
deliberately simple: each subexpression becomes a dense numpy array with
one axis per free index variable, and each reduction variable is summed at
the smallest subexpression that contains all of its uses.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .expr import Access, Expr, IndexVar, Literal, accesses
from .notation import Assignment, reduction_scopes


class ShapeError(ValueError):
    pass


def index_extents(a: Assignment, inputs: Mapping[str, np.ndarray]) -> dict[IndexVar, int]:
    """Bind every index variable to an extent from the input shapes.

    Raises:
        ShapeError: when two uses of a variable disagree, or a variable has
            no extent.
    """
    ext: dict[IndexVar, int] = {}
    for acc in [a.lhs] + accesses(a.rhs):
        name = acc.tensor.name
        if name not in inputs:
            continue
        shape = np.shape(inputs[name])
        if len(shape) != len(acc.indices):
            raise ShapeError(f"{name} has shape {shape} but is accessed with "
                             f"{len(acc.indices)} indices")
        for v, n in zip(acc.indices, shape):
            if ext.setdefault(v, int(n)) != n:
                raise ShapeError(f"index {v.name} bound to both {ext[v]} and {n}")
    for v in a.index_vars:
        if v not in ext:
            raise ShapeError(f"no extent for index {v.name}")
    return ext


def _align(arr: np.ndarray, have: list[IndexVar], want: list[IndexVar],
           ext: dict[IndexVar, int]) -> np.ndarray:
    """Permute/expand ``arr`` (axes ``have``) to full axes ``want``."""
    perm = [have.index(v) for v in want if v in have]
    arr = np.transpose(arr, perm) if perm else arr
    shape = [ext[v] if v in have else 1 for v in want]
    return np.broadcast_to(np.reshape(arr, shape), [ext[v] for v in want])


def dense_eval(a: Assignment, inputs: Mapping[str, np.ndarray]) -> np.ndarray:
    """Evaluate ``a`` on dense inputs and return the dense output."""
    inputs = {k: np.asarray(v) for k, v in inputs.items()}
    ext = index_extents(a, inputs)
    scopes = reduction_scopes(a.rhs, a.reduction_vars)

    def ev(e: Expr, path: tuple[int, ...]) -> tuple[np.ndarray, list[IndexVar]]:
        if isinstance(e, Literal):
            arr, axes = np.asarray(e.value), []
        elif isinstance(e, Access):
            name = e.tensor.name
            if name not in inputs:
                raise KeyError(f"no input bound for tensor {name}")
            axes = []
            for v in e.indices:
                if v not in axes:
                    axes.append(v)
            letters = "".join(chr(97 + axes.index(v)) for v in e.indices)
            out = "".join(chr(97 + n) for n in range(len(axes)))
            arr = np.einsum(f"{letters}->{out}", inputs[name]) if e.indices else inputs[name]
        else:
            (la, lv), (ra, rv) = ev(e.a, path + (0,)), ev(e.b, path + (1,))
            axes = lv + [v for v in rv if v not in lv]
            la, ra = _align(la, lv, axes, ext), _align(ra, rv, axes, ext)
            name = type(e).__name__
            arr = la + ra if name == "Add" else la - ra if name == "Sub" else la * ra
        owned = [v for v, p in scopes.items() if p == path and v in axes]
        if owned:
            arr = np.sum(arr, axis=tuple(axes.index(v) for v in owned))
            axes = [v for v in axes if v not in owned]
        return np.asarray(arr), axes

    arr, axes = ev(a.rhs, ())
    return np.array(_align(arr, axes, list(a.lhs.indices), ext), order="C")
