"""Tensor iterator contractions and the rewrite system that lowers them.

A contraction describes how the tensor levels indexed by one loop variable
are combined: leaves are level iterators (universe ``U`` for uncompressed
levels, ``C`` for compressed ones, ``B`` for bit vectors) joined by union
(from addition) and intersection (from multiplication).

:func:`lower_iter` rewrites a contraction into a loop header: a list of
bit-vector preparation steps followed by a single loop (dense counter,
position iteration, or a one/two-operand bit-vector scan). Every rule
application is recorded so tests can see which rules fired.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import Callable, Union


class IterFormat(enum.Enum):
    UNIVERSE = "U"
    COMPRESSED = "C"
    BITVECTOR = "B"


class Op(enum.Enum):
    UNION = "∪"
    INTERSECT = "∩"

    @property
    def boolean(self) -> str:
        return "OR" if self is Op.UNION else "AND"


@dataclasses.dataclass(frozen=True)
class Leaf:
    name: str
    fmt: IterFormat
    result: bool = False

    def __str__(self) -> str:
        return f"{self.fmt.value}_{self.name}" + ("*" if self.result else "")


@dataclasses.dataclass(frozen=True)
class Node:
    op: Op
    left: "Contraction"
    right: "Contraction"

    def __str__(self) -> str:
        return f"({self.left} {self.op.value} {self.right})"


Contraction = Union[Leaf, Node]


def leaves(c: Contraction) -> list[Leaf]:
    if isinstance(c, Leaf):
        return [c]
    return leaves(c.left) + leaves(c.right)


def union(a: Contraction, b: Contraction) -> Node:
    return Node(Op.UNION, a, b)


def intersect(a: Contraction, b: Contraction) -> Node:
    return Node(Op.INTERSECT, a, b)


# -- lowered header ----------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class GenBitVector:
    leaf: str
    bv: str


@dataclasses.dataclass(frozen=True)
class CombineBitVectors:
    op: Op
    a: str
    b: str
    out: str


@dataclasses.dataclass(frozen=True)
class DenseLoop:
    pass


@dataclasses.dataclass(frozen=True)
class PositionLoop:
    leaf: str


@dataclasses.dataclass(frozen=True)
class SingleScan:
    bv: str


@dataclasses.dataclass(frozen=True)
class DualScan:
    op: Op
    a: str
    b: str


LoopKind = Union[DenseLoop, PositionLoop, SingleScan, DualScan]


class Role(enum.Enum):
    DENSE = "dense"          # uncompressed level, addressed by the loop index
    POSITIONS = "positions"  # compressed level driving a position loop
    SCAN = "scan"            # bit vector fed directly to the scan
    RANK = "rank"            # position recovered by ranking the index in its bit vector


@dataclasses.dataclass(frozen=True)
class LoweredIter:
    steps: tuple[GenBitVector | CombineBitVectors, ...]
    loop: LoopKind
    roles: dict[str, Role]
    leaf_bv: dict[str, str]
    rules: tuple[str, ...]
    depth: int

    def scan_operands(self) -> tuple[str, ...]:
        if isinstance(self.loop, DualScan):
            return (self.loop.a, self.loop.b)
        if isinstance(self.loop, SingleScan):
            return (self.loop.bv,)
        return ()


class UnmappedCoIteration(ValueError):
    pass


# -- rewrite state -------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class _It:
    """A collapsed iterator during rewriting."""

    fmt: IterFormat
    leaf: str | None = None          # the compressed leaf (fmt C)
    bv: str | None = None            # bit vector (fmt B)
    members: tuple[str, ...] = ()    # leaves whose positions this iterator covers
    generated: bool = False          # bit vector produced directly from one leaf
    result: bool = False


@dataclasses.dataclass
class _Engine:
    n: int
    steps: list = dataclasses.field(default_factory=list)
    roles: dict = dataclasses.field(default_factory=dict)
    leaf_bv: dict = dataclasses.field(default_factory=dict)
    rules: list = dataclasses.field(default_factory=list)
    depth: int = 0
    combined: int = 0

    def fire(self, rule: str) -> None:
        self.depth += 1
        self.rules.append(rule)
        if self.depth > 4 * self.n:
            raise AssertionError(f"rewrite depth {self.depth} exceeds bound {4 * self.n}")

    def gen(self, it: _It) -> _It:
        bv = f"{it.leaf}_bv"
        self.steps.append(GenBitVector(it.leaf, bv))
        self.leaf_bv[it.leaf] = bv
        return _It(IterFormat.BITVECTOR, bv=bv, members=(it.leaf,), generated=True,
                   result=it.result)

    def absorb(self, it: _It) -> None:
        """Leaves swallowed by a universe are located by ranking in their bit vector."""
        if it.fmt is IterFormat.COMPRESSED:
            it = self.gen(it)
        for m in it.members:
            self.roles.setdefault(m, Role.RANK)


# A binary rule inspects (op, left, right) and returns a collapsed iterator
# or None; ``root`` tells co-iteration whether it may become the final scan.
BinaryRule = Callable[[_Engine, Op, _It, _It, bool], "_It | tuple | None"]

U, C, B = IterFormat.UNIVERSE, IterFormat.COMPRESSED, IterFormat.BITVECTOR


def _universe_absorption(eng, op, a, b, root):
    if op is Op.UNION and a.fmt is U:
        eng.fire("universe: U ∪ _ → U")
        eng.absorb(b)
        return _It(U, members=a.members)
    if op is Op.UNION and b.fmt is U:
        eng.fire("universe: _ ∪ U → U")
        eng.absorb(a)
        return _It(U, members=b.members)
    if op is Op.INTERSECT and a.fmt is U and b.fmt is U:
        eng.fire("universe: U ∩ U → U")
        return _It(U, members=a.members + b.members)
    return None


def _compressed_with_universe(eng, op, a, b, root):
    if op is not Op.INTERSECT:
        return None
    if a.fmt in (C, B) and b.fmt is U:
        eng.fire(f"compressed-universe: {a.fmt.value} ∩ U → {a.fmt.value}")
        return a
    if a.fmt is U and b.fmt in (C, B):
        eng.fire(f"compressed-universe: U ∩ {b.fmt.value} → {b.fmt.value}")
        return b
    return None


def _co_iteration(eng, op, a, b, root):
    if a.fmt is C and b.fmt is C:
        eng.fire("co-iteration: C ∘ C → gen BV, gen BV")
        return _co_iteration(eng, op, eng.gen(a), eng.gen(b), root)
    if a.fmt is C and b.fmt is B:
        eng.fire("co-iteration: C ∘ B → gen BV")
        return _co_iteration(eng, op, eng.gen(a), b, root)
    if a.fmt is B and b.fmt is C:
        eng.fire("co-iteration: B ∘ C → gen BV")
        return _co_iteration(eng, op, a, eng.gen(b), root)
    if a.fmt is B and b.fmt is B:
        if root:
            eng.fire(f"co-iteration: B ∘ B → {op.boolean} scan")
            return ("dual", op, a, b)
        eng.combined += 1
        out = f"bv{eng.combined}"
        eng.fire(f"co-iteration: B ∘ B → {op.boolean} bit vector")
        eng.steps.append(CombineBitVectors(op, a.bv, b.bv, out))
        for m in a.members + b.members:
            eng.roles[m] = Role.RANK
        return _It(B, bv=out, members=a.members + b.members)
    return None


RULES: list[tuple[str, BinaryRule]] = [
    ("universe", _universe_absorption),
    ("compressed-universe", _compressed_with_universe),
    ("co-iteration", _co_iteration),
]


def register_rule(name: str, rule: BinaryRule, first: bool = False) -> None:
    """Add a user rewrite rule (tried before the built-ins when ``first``)."""
    if first:
        RULES.insert(0, (name, rule))
    else:
        RULES.append((name, rule))


def _leaf_iter(leaf: Leaf) -> _It:
    if leaf.fmt is IterFormat.UNIVERSE:
        return _It(U, members=(leaf.name,), result=leaf.result)
    if leaf.fmt is IterFormat.COMPRESSED:
        return _It(C, leaf=leaf.name, members=(leaf.name,), result=leaf.result)
    return _It(B, bv=f"{leaf.name}_bv", members=(leaf.name,), generated=True,
               result=leaf.result)


def _collapse(eng: _Engine, c: Contraction, root: bool):
    if isinstance(c, Leaf):
        it = _leaf_iter(c)
        if c.fmt is IterFormat.BITVECTOR:
            eng.leaf_bv[c.name] = it.bv
        return it
    sides = []
    for child in (c.left, c.right):
        if isinstance(child, Node):
            eng.fire("base: collapse prefix")
        sides.append(_collapse(eng, child, False))
    a, b = sides
    for name, rule in RULES:
        out = rule(eng, c.op, a, b, root)
        if out is not None:
            return out
    raise UnmappedCoIteration(f"unmapped co-iteration {c}")


def lower_iter(c: Contraction) -> LoweredIter:
    """Rewrite ``c`` into a loop header (see module docstring)."""
    n = len(leaves(c))
    eng = _Engine(n)
    it = _collapse(eng, c, True)
    if isinstance(it, tuple):
        _, op, a, b = it
        loop: LoopKind = DualScan(op, a.bv, b.bv)
        for side in (a, b):
            for m in side.members:
                eng.roles[m] = Role.SCAN if side.generated else Role.RANK
    elif it.fmt is U:
        eng.fire("single: U → dense foreach")
        loop = DenseLoop()
        for m in it.members:
            eng.roles.setdefault(m, Role.DENSE)
    elif it.fmt is B:
        eng.fire("single: B → result bit vector + scan")
        loop = SingleScan(it.bv)
        for m in it.members:
            eng.roles[m] = Role.SCAN if it.generated else Role.RANK
    elif it.result:
        eng.fire("single: C as result → gen BV")
        it = eng.gen(it)
        eng.fire("single: B → result bit vector + scan")
        loop = SingleScan(it.bv)
        eng.roles[it.members[0]] = Role.SCAN
    else:
        eng.fire("single: C → position iteration")
        loop = PositionLoop(it.leaf)
        eng.roles[it.leaf] = Role.POSITIONS
    for leaf in leaves(c):
        eng.roles.setdefault(leaf.name, Role.DENSE)
    return LoweredIter(tuple(eng.steps), loop, dict(eng.roles), dict(eng.leaf_bv),
                       tuple(eng.rules), eng.depth)


__all__ = [
    "B", "C", "U", "Contraction", "CombineBitVectors", "DenseLoop", "DualScan", "GenBitVector",
    "IterFormat", "Leaf", "LoweredIter", "Node", "Op", "PositionLoop", "Role", "SingleScan",
    "UnmappedCoIteration", "intersect", "leaves", "lower_iter", "register_rule", "union",
]
