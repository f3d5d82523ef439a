"""Direct interpreter for concrete index notation over dense arrays.

Foralls run as loops over dense extents, ``where`` runs its producer to
completion before its consumer (after zeroing the temporaries it writes),
and mapped calls run through the reference implementation registered for
their backend function. Relations only matter for deriving loop extents and
reconstructing split/fused variables; environment bindings are ignored.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..expr import Access, Add, Expr, IndexVar, Literal, Mul, Sub
from .backend import lookup
from .stmt import (Assign, Forall, Fuse, Increment, MappedCall, Relation, Sequence, SplitDown,
                   SplitUp, Stmt, SuchThat, Where, assignments, stmt_accesses, walk)


class InterpretError(RuntimeError):
    pass


def _relations(s: Stmt) -> list[Relation]:
    out: list[Relation] = []
    for _, node in walk(s):
        if isinstance(node, SuchThat):
            out.extend(r for r in node.relations if isinstance(r, (SplitUp, SplitDown, Fuse)))
        elif isinstance(node, MappedCall):
            out.extend(_relations(node.original))
    return out


def _producer_temporaries(s: Stmt) -> set[str]:
    temps: set[str] = set()
    for _, node in walk(s):
        if isinstance(node, Where):
            temps.update(a.lhs.tensor.name for a in assignments(node.producer))
        elif isinstance(node, MappedCall):
            temps |= _producer_temporaries(node.original)
    return temps


class _Interpreter:
    def __init__(self, s: Stmt, inputs: Mapping[str, np.ndarray]):
        self.inputs = {k: np.asarray(v) for k, v in inputs.items()}
        kinds = [v.dtype for v in self.inputs.values()]
        self.dtype = (np.int64 if kinds and all(np.issubdtype(k, np.integer) for k in kinds)
                      else np.float64)
        self.rels = _relations(s)
        self.ext = self._extents(s)
        self.arrays: dict[str, np.ndarray] = {k: v.astype(self.dtype, copy=True)
                                              for k, v in self.inputs.items()}
        self.temps = _producer_temporaries(s) - set(self.inputs)
        written = {a.lhs.tensor.name: a.lhs for a in assignments(s)}
        for acc in stmt_accesses(s):
            name = acc.tensor.name
            if name not in self.inputs and name not in written:
                raise InterpretError(f"unbound tensor {name}")
        for name, lhs in written.items():
            if name not in self.arrays:
                self.arrays[name] = np.zeros(self._shape(lhs), dtype=self.dtype)

    def _shape(self, acc: Access) -> tuple[int, ...]:
        try:
            return tuple(self.ext[v] for v in acc.indices)
        except KeyError as err:
            raise InterpretError(f"no extent for index {err.args[0]}") from None

    def _extents(self, s: Stmt) -> dict[IndexVar, int]:
        ext: dict[IndexVar, int] = {}
        for acc in stmt_accesses(s):
            arr = self.inputs.get(acc.tensor.name)
            if arr is None:
                continue
            if arr.ndim != len(acc.indices):
                raise InterpretError(f"{acc.tensor.name} has {arr.ndim} modes but is accessed "
                                     f"with {len(acc.indices)} indices")
            for v, n in zip(acc.indices, arr.shape):
                if ext.setdefault(v, int(n)) != n:
                    raise InterpretError(f"index {v} bound to both {ext[v]} and {n}")
        changed = True
        while changed:
            changed = False
            for r in self.rels:
                new: dict[IndexVar, int] = {}
                if isinstance(r, SplitUp) and r.i in ext:
                    new = {r.ii: r.c, r.io: math.ceil(ext[r.i] / r.c)}
                elif isinstance(r, SplitDown) and r.i in ext:
                    new = {r.io: r.c, r.ii: math.ceil(ext[r.i] / r.c)}
                elif isinstance(r, Fuse) and r.io in ext and r.ii in ext:
                    new = {r.f: ext[r.io] * ext[r.ii]}
                for v, n in new.items():
                    if v not in ext:
                        ext[v] = n
                        changed = True
        return ext

    # -- binding of derived variables ----------------------------------------

    def _bind(self, env: dict[IndexVar, int], var: IndexVar, value: int) -> bool:
        """Bind ``var`` and everything derivable from it; False means a tail iteration."""
        env[var] = value
        progress = True
        while progress:
            progress = False
            for r in self.rels:
                if isinstance(r, Fuse) and r.f in env and r.io not in env:
                    inner = self.ext[r.ii]
                    env[r.io], env[r.ii] = divmod(env[r.f], inner)
                    progress = True
                elif isinstance(r, (SplitUp, SplitDown)) and r.io in env and r.ii in env \
                        and r.i not in env:
                    n = self.ext[r.i]
                    step = r.c if isinstance(r, SplitUp) else math.ceil(n / r.c)
                    assert 0 <= env[r.ii] < self.ext[r.ii]
                    i = env[r.io] * step + env[r.ii]
                    if i >= n:
                        return False
                    env[r.i] = i
                    progress = True
        return True

    # -- execution -------------------------------------------------------------

    def eval(self, e: Expr, env: dict[IndexVar, int]):
        if isinstance(e, Access):
            arr = self.arrays[e.tensor.name]
            return arr[tuple(env[v] for v in e.indices)]
        if isinstance(e, Literal):
            return e.value
        a, b = self.eval(e.a, env), self.eval(e.b, env)
        if isinstance(e, Add):
            return a + b
        if isinstance(e, Sub):
            return a - b
        if isinstance(e, Mul):
            return a * b
        raise InterpretError(f"unknown expression {e!r}")

    def run(self, s: Stmt, env: dict[IndexVar, int]) -> None:
        if isinstance(s, Forall):
            if s.var not in self.ext:
                raise InterpretError(f"no extent for index {s.var}")
            for v in range(self.ext[s.var]):
                local = dict(env)
                if self._bind(local, s.var, v):
                    self.run(s.body, local)
        elif isinstance(s, (Assign, Increment)):
            arr = self.arrays[s.lhs.tensor.name]
            idx = tuple(env[v] for v in s.lhs.indices)
            value = self.eval(s.rhs, env)
            if isinstance(s, Increment):
                arr[idx] += value
            else:
                arr[idx] = value
        elif isinstance(s, Sequence):
            self.run(s.first, env)
            self.run(s.second, env)
        elif isinstance(s, Where):
            for a in assignments(s.producer):
                if a.lhs.tensor.name in self.temps:
                    self.arrays[a.lhs.tensor.name][...] = 0
            self.run(s.producer, env)
            self.run(s.consumer, env)
        elif isinstance(s, SuchThat):
            self.run(s.body, env)
        elif isinstance(s, MappedCall):
            try:
                func = lookup(s.backend, s.func)
            except KeyError as err:
                raise InterpretError(str(err)) from None
            func.reference(s, lambda st: self.run(st, env))
        else:
            raise InterpretError(f"unknown statement {s!r}")


def interpret_cin(s: Stmt, inputs: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Run ``s`` and return every tensor it writes, keyed by name."""
    it = _Interpreter(s, inputs)
    it.run(s, {})
    written = {a.lhs.tensor.name for a in assignments(s)}
    return {name: it.arrays[name] for name in written}
